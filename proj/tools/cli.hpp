#pragma once

#include "treegae/eval.hpp"
#include "treegae/model.hpp"
#include "treegae/synth.hpp"
#include "treegae/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace treegae::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

/// Every setting a command can consume. Built-in defaults, then the --config
/// file, then explicit flags.
struct RunConfig {
    std::uint64_t seed = 0;
    GeneratorConfig generator;
    std::size_t n_train = 24;
    std::size_t n_val = 8;
    std::size_t n_test = 8;
    ModelConfig model;
    TrainConfig train;
    EvalSettings eval;
    std::string split = "test";
    std::vector<std::size_t> sweep_sizes{4, 8, 16, 24};
    std::vector<std::size_t> sweep_hidden{8, 16, 32};
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string init;
    std::string resume;
};

nlohmann::json to_json(const RunConfig& c);
/// Overlays the keys present in `j` onto `c`.
void merge_json(RunConfig& c, const nlohmann::json& j);

/// Seed used by one sweep cell; depends only on the base seed and the cell.
std::uint64_t sweep_cell_seed(std::uint64_t base, std::size_t train_size, std::size_t hidden_units);

/// Entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace treegae::cli
