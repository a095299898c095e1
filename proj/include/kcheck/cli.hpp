#pragma once

// Command-line front end. run_cli is the whole program minus main(), so the
// commands can be driven in-process by tests.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace kcheck {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;  // bad input or usage
inline constexpr int kExitModel = 2;  // training, model or runtime failure

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string toolkit_version();

std::uint64_t fnv1a64(std::string_view bytes);

struct Manifest {
    std::string command;
    nlohmann::ordered_json args;  // effective option values
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

/// Writes "<primary output>.manifest.json" with command, args, config_hash
/// (FNV-1a 64 of the serialized args, hex), seed, inputs, outputs, version
/// and timestamp. The timestamp is taken from SOURCE_DATE_EPOCH when set.
/// Returns the manifest path.
std::string write_manifest(const Manifest& manifest);

}  // namespace kcheck
