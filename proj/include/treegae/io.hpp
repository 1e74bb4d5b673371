#pragma once

// JSON persistence for checkpoints plus shared float formatting. Reals are
// written with 17 significant digits so every double round-trips exactly.

#include "treegae/model.hpp"
#include "treegae/training.hpp"

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace treegae {

std::string format_real(double value);

/// Appends `{"rows": R, "cols": C, "values": [...]}`.
void write_matrix_json(std::string& out, const Matrix& m);
Matrix read_matrix_json(const nlohmann::json& j, const std::string& context);

std::string model_config_json(const ModelConfig& config);
ModelConfig read_model_config(const nlohmann::json& j);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::optional<AdamState> optimizer;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string checkpoint_to_string(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Throws IoError when the file cannot be opened or written.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Parses JSON text, mapping syntax errors to ParseError with line context.
nlohmann::json parse_json(const std::string& text, const std::string& source);

} // namespace treegae
