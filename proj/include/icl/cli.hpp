#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icl/experiments.hpp"

namespace icl {

// Shortest decimal string that parses back to exactly `x` ("nan", "inf" and
// "-inf" for non-finite values).
std::string format_double(double x);

// Renders one CSV cell: numbers via format_double (integers verbatim),
// strings quoted when they contain a comma, quote or newline.
std::string format_cell(const nlohmann::json& value);

// Writes a CSV file with `seed` and `config_hash` appended to every row.
// The file is written to a sibling temporary and renamed into place.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<nlohmann::json>>& rows, std::uint64_t seed, std::uint64_t config_hash);

// Writes text atomically (temporary file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Loads the JSON config at `path` (defaults when empty) and applies the
// --seed / --samples overrides.
ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                             std::optional<std::int64_t> samples);

// Subcommands. Each writes its CSV files under `out`, prints a summary to
// `log` and returns the process exit code (0 = all checks pass).
int cmd_theory(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_validate(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log,
                 int settings = 20, int moment_instances = 10);
int cmd_reproduce(const std::string& figure, const ExperimentConfig& cfg, const std::filesystem::path& out,
                  std::ostream& log);
int cmd_train(const std::string& regime, const ExperimentConfig& cfg, const std::filesystem::path& out,
              std::ostream& log);
int cmd_mc(const std::string& params_path, const ExperimentConfig& cfg, const std::filesystem::path& out,
           std::ostream& log);

}  // namespace icl
