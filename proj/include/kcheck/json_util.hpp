#pragma once

#include <string>

#include <json.hpp>

#include "kcheck/numkernel.hpp"

namespace kcheck {

using ojson = nlohmann::ordered_json;

ojson vec_to_json(const Vec& v);
ojson mat_to_json(const Mat& m);  // array of rows
Vec vec_from_json(const ojson& j);
Mat mat_from_json(const ojson& j);

// Parse errors and missing files surface as InputError.
ojson read_json_file(const std::string& path);
// Two-space indented dump with a trailing newline.
void write_json_file(const ojson& doc, const std::string& path);

}  // namespace kcheck
