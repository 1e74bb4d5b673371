#include "treegae/io.hpp"

#include "treegae/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace treegae {

std::string format_real(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_matrix_json(std::string& out, const Matrix& m) {
    out += "{\"rows\": " + std::to_string(m.rows()) + ", \"cols\": " + std::to_string(m.cols()) + ", \"values\": [";
    bool first = true;
    for (double v : m.values()) {
        if (!first) {
            out += ", ";
        }
        first = false;
        out += format_real(v);
    }
    out += "]}";
}

Matrix read_matrix_json(const nlohmann::json& j, const std::string& context) {
    try {
        const auto rows = j.at("rows").get<std::size_t>();
        const auto cols = j.at("cols").get<std::size_t>();
        auto values = j.at("values").get<std::vector<double>>();
        if (values.size() != rows * cols) {
            throw ParseError(context + ": " + std::to_string(values.size()) + " values for a " +
                             std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
        }
        return Matrix(rows, cols, std::move(values));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(context + ": " + e.what());
    }
}

std::string model_config_json(const ModelConfig& config) {
    std::ostringstream s;
    s << "{\"num_layers\": " << config.num_layers << ", \"hidden_dim\": " << config.hidden_dim
      << ", \"input_dim\": " << config.input_dim << ", \"hidden_activation\": \""
      << activation_name(config.hidden_activation) << "\", \"final_activation\": \""
      << activation_name(config.final_activation) << "\"}";
    return s.str();
}

ModelConfig read_model_config(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.num_layers = j.value("num_layers", c.num_layers);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.input_dim = j.value("input_dim", c.input_dim);
        c.hidden_activation = parse_activation(j.value("hidden_activation", std::string("relu")));
        c.final_activation = parse_activation(j.value("final_activation", std::string("identity")));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    return c;
}

namespace {

void write_layers(std::string& out, const ModelParams& params) {
    out += "[";
    for (std::size_t l = 0; l < params.size(); ++l) {
        out += l == 0 ? "\n    " : ",\n    ";
        out += "{\"w0\": ";
        write_matrix_json(out, params[l].w0);
        out += ", \"w1\": ";
        write_matrix_json(out, params[l].w1);
        out += "}";
    }
    out += "\n  ]";
}

ModelParams read_layers(const nlohmann::json& j, const std::string& context) {
    ModelParams params;
    if (!j.is_array()) {
        throw ParseError(context + ": expected an array of layers");
    }
    for (std::size_t l = 0; l < j.size(); ++l) {
        const std::string where = context + "[" + std::to_string(l) + "]";
        if (!j[l].contains("w0") || !j[l].contains("w1")) {
            throw ParseError(where + ": missing w0 or w1");
        }
        params.push_back({read_matrix_json(j[l]["w0"], where + ".w0"), read_matrix_json(j[l]["w1"], where + ".w1")});
    }
    return params;
}

} // namespace

std::string checkpoint_to_string(const Checkpoint& checkpoint) {
    std::string out = "{\n  \"format_version\": 1,\n  \"config\": " + model_config_json(checkpoint.config) +
                      ",\n  \"seed\": " + std::to_string(checkpoint.seed) +
                      ",\n  \"epoch\": " + std::to_string(checkpoint.epoch) + ",\n  \"layers\": ";
    write_layers(out, checkpoint.params);
    if (checkpoint.optimizer) {
        out += ",\n  \"optimizer\": {\"step\": " + std::to_string(checkpoint.optimizer->step) + ",\n  \"m\": ";
        write_layers(out, checkpoint.optimizer->first_moment);
        out += ",\n  \"v\": ";
        write_layers(out, checkpoint.optimizer->second_moment);
        out += "}";
    }
    out += "\n}\n";
    return out;
}

Checkpoint checkpoint_from_string(const std::string& text) {
    const auto j = parse_json(text, "checkpoint");
    Checkpoint c;
    try {
        c.config = read_model_config(j.at("config"));
        c.seed = j.value("seed", std::uint64_t{0});
        c.epoch = j.value("epoch", std::size_t{0});
        c.params = read_layers(j.at("layers"), "checkpoint.layers");
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            AdamState adam;
            adam.step = o.at("step").get<std::uint64_t>();
            adam.first_moment = read_layers(o.at("m"), "checkpoint.optimizer.m");
            adam.second_moment = read_layers(o.at("v"), "checkpoint.optimizer.v");
            c.optimizer = std::move(adam);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    try {
        check_params(c.params, c.config);
        if (c.optimizer) {
            check_params(c.optimizer->first_moment, c.config);
            check_params(c.optimizer->second_moment, c.config);
        }
    } catch (const DimensionError& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    write_text_file(path, checkpoint_to_string(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_string(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    out.close();
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

nlohmann::json parse_json(const std::string& text, const std::string& source) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Byte offset -> line number for the diagnostic.
        std::size_t line = 1;
        const std::size_t limit = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i < limit; ++i) {
            line += text[i] == '\n';
        }
        throw ParseError(source + ": line " + std::to_string(line) + ": " + e.what());
    }
}

} // namespace treegae
