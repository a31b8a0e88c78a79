#pragma once

// Small JSON emit helpers shared by the file writers. Doubles are printed
// with 17 significant digits so parsing recovers the exact bit pattern.

#include <cstdio>
#include <string>

#include "brima/data.hpp"

namespace brima::jsonw {

inline void number(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

inline void string(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

// The shared per-sample fields, without the surrounding braces.
inline void sample_fields(std::string& out, const MultiModalSample& s, const char* split) {
    out += "\"id\":";
    string(out, s.id);
    out += ",\"task\":" + std::to_string(s.task_index);
    out += ",\"split\":\"";
    out += split;
    out += "\",\"score\":";
    number(out, s.score);
    out += ",\"mask\":[";
    for (int m = 0; m < s.modality_count(); ++m) {
        if (m) out += ',';
        out += s.missing[m] ? '1' : '0';
    }
    out += "],\"features\":[";
    for (int m = 0; m < s.modality_count(); ++m) {
        if (m) out += ',';
        if (s.missing[m]) {
            out += "null";
        } else {
            out += '[';
            for (std::size_t i = 0; i < s.features[m].size(); ++i) {
                if (i) out += ',';
                number(out, s.features[m][i]);
            }
            out += ']';
        }
    }
    out += ']';
}

}  // namespace brima::jsonw
