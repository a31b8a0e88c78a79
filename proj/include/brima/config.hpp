#pragma once

#include <string>

#include "brima/data.hpp"
#include "brima/trainer.hpp"

namespace brima {

// On-disk configuration: a JSON object with optional "stream" and "trainer"
// sections. Every field is optional and defaults to the built-in values;
// unknown keys are rejected.
struct FileConfig {
    StreamConfig stream;
    TrainerConfig trainer;
};

FileConfig parse_config(const std::string& json_text);
FileConfig load_config_file(const std::string& path);

}  // namespace brima
