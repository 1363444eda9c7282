#include "drf/serialization.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace drf {

namespace {

using nlohmann::json;

// --- config ---------------------------------------------------------------

template <typename T>
T config_field(const json& doc, const char* key, T fallback, bool required) {
    const auto it = doc.find(key);
    if (it == doc.end()) {
        if (required) throw ConfigError(key, std::string("missing required field \"") + key + "\"");
        return fallback;
    }
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(key, std::string("field \"") + key + "\" must be a boolean");
            return it->get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) {
                throw ConfigError(key, std::string("field \"") + key + "\" must be an integer");
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (it->is_number_unsigned()) return it->get<T>();
                if (it->get<std::int64_t>() < 0) {
                    throw ConfigError(key, std::string("field \"") + key + "\" must be non-negative");
                }
            }
            return it->get<T>();
        } else {
            if (!it->is_number()) throw ConfigError(key, std::string("field \"") + key + "\" must be a number");
            return it->get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("field \"") + key + "\": " + e.what());
    }
}

// --- model writer -----------------------------------------------------------

class Writer {
public:
    void raw(std::string_view s) { out_ << s; }
    void key(std::string_view k) { out_ << '"' << k << "\": "; }
    void number(double v) {
        // "-0" would parse back as the integer 0 and lose the sign bit.
        if (v == 0.0 && std::signbit(v)) {
            out_ << "-0.0";
        } else {
            out_ << format_double(v);
        }
    }
    void integer(long long v) { out_ << v; }

    template <typename Range>
    void numbers(const Range& values) {
        out_ << '[';
        bool first = true;
        for (double v : values) {
            if (!first) out_ << ", ";
            number(v);
            first = false;
        }
        out_ << ']';
    }

    void vector(const Eigen::VectorXd& v) { numbers(std::vector<double>(v.data(), v.data() + v.size())); }

    void row_major(const Eigen::MatrixXd& m) {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
        }
        numbers(flat);
    }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

void write_stats(Writer& w, const ColumnStats& stats) {
    w.raw("{");
    w.key("mean");
    w.vector(stats.mean);
    w.raw(", ");
    w.key("scale");
    w.vector(stats.scale);
    w.raw("}");
}

// --- model reader -----------------------------------------------------------

const json& member(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ModelFormatError(where + " is not an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw ModelFormatError(where + ": missing \"" + key + "\"");
    return *it;
}

Eigen::Index read_count(const json& obj, const char* key, const std::string& where) {
    const json& v = member(obj, key, where);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ModelFormatError(where + ": \"" + key + "\" must be a non-negative integer");
    }
    return static_cast<Eigen::Index>(v.get<long long>());
}

std::vector<double> read_numbers(const json& v, std::size_t expected, const std::string& where) {
    if (!v.is_array() || v.size() != expected) {
        throw ModelFormatError(where + ": expected an array of " + std::to_string(expected) + " numbers");
    }
    std::vector<double> out;
    out.reserve(expected);
    for (const auto& x : v) {
        if (!x.is_number()) throw ModelFormatError(where + ": non-numeric entry");
        out.push_back(x.get<double>());
    }
    return out;
}

Eigen::VectorXd read_vector(const json& v, Eigen::Index n, const std::string& where) {
    const auto values = read_numbers(v, static_cast<std::size_t>(n), where);
    return Eigen::Map<const Eigen::VectorXd>(values.data(), n);
}

Eigen::MatrixXd read_row_major(const json& v, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
    const auto values = read_numbers(v, static_cast<std::size_t>(rows * cols), where);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
}

ColumnStats read_stats(const json& v, Eigen::Index n, const std::string& where) {
    ColumnStats stats = ColumnStats::identity(n);
    stats.mean = read_vector(member(v, "mean", where), n, where + ".mean");
    stats.scale = read_vector(member(v, "scale", where), n, where + ".scale");
    for (Eigen::Index c = 0; c < n; ++c) {
        if (!(stats.scale(c) > 0.0)) throw ModelFormatError(where + ".scale must be positive");
    }
    return stats;
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");

    static const std::set<std::string> known{
        "trees", "depth", "output_units", "hidden_layers", "leaf_update_iterations",
        "batches_per_leaf_update", "batch_size", "max_iterations", "learning_rate", "lr_decay",
        "lr_decay_interval", "cov_epsilon", "seed", "leaf_init_permute", "final_leaf_refit",
        "early_stop", "early_stop_tolerance", "early_stop_patience"};
    for (const auto& item : doc.items()) {
        if (!known.contains(item.key())) {
            throw ConfigError(item.key(), "unknown config field \"" + item.key() + "\"");
        }
    }

    TrainConfig c;
    c.trees = config_field<std::size_t>(doc, "trees", c.trees, true);
    c.depth = config_field<int>(doc, "depth", c.depth, true);
    c.output_units = config_field<Eigen::Index>(doc, "output_units", c.output_units, true);
    const auto hidden = doc.find("hidden_layers");
    if (hidden == doc.end()) throw ConfigError("hidden_layers", "missing required field \"hidden_layers\"");
    if (!hidden->is_array()) throw ConfigError("hidden_layers", "field \"hidden_layers\" must be an array");
    c.hidden_layers.clear();
    for (const auto& w : *hidden) {
        if (!w.is_number_integer()) {
            throw ConfigError("hidden_layers", "field \"hidden_layers\" must hold integers");
        }
        c.hidden_layers.push_back(w.get<Eigen::Index>());
    }
    c.leaf_update_iterations = config_field<int>(doc, "leaf_update_iterations", c.leaf_update_iterations, false);
    c.batches_per_leaf_update =
        config_field<std::size_t>(doc, "batches_per_leaf_update", c.batches_per_leaf_update, false);
    c.batch_size = config_field<std::size_t>(doc, "batch_size", c.batch_size, false);
    c.max_iterations = config_field<std::int64_t>(doc, "max_iterations", c.max_iterations, false);
    c.learning_rate = config_field<double>(doc, "learning_rate", c.learning_rate, false);
    c.lr_decay = config_field<double>(doc, "lr_decay", c.lr_decay, false);
    c.lr_decay_interval = config_field<std::int64_t>(doc, "lr_decay_interval", c.lr_decay_interval, false);
    c.cov_epsilon = config_field<double>(doc, "cov_epsilon", c.cov_epsilon, false);
    c.seed = config_field<std::uint64_t>(doc, "seed", c.seed, false);
    c.leaf_init_permute = config_field<bool>(doc, "leaf_init_permute", c.leaf_init_permute, false);
    c.final_leaf_refit = config_field<bool>(doc, "final_leaf_refit", c.final_leaf_refit, false);
    c.early_stop = config_field<bool>(doc, "early_stop", c.early_stop, false);
    c.early_stop_tolerance = config_field<double>(doc, "early_stop_tolerance", c.early_stop_tolerance, false);
    c.early_stop_patience = config_field<int>(doc, "early_stop_patience", c.early_stop_patience, false);

    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.substr(0, msg.find(':')), msg);
    }
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_train_config(buffer.str());
}

std::string model_to_string(const TrainedForest& forest) {
    const ForestModel& m = forest.model;
    Writer w;
    w.raw("{\n  ");
    w.key("format");
    w.raw(std::string("\"") + kModelFormat + "\",\n  ");
    w.key("version");
    w.integer(kModelVersion);
    w.raw(",\n  ");
    w.key("d_x");
    w.integer(m.input_dim());
    w.raw(",\n  ");
    w.key("d_y");
    w.integer(m.target_dim());
    w.raw(",\n  ");
    w.key("output_units");
    w.integer(m.output_units());
    w.raw(",\n  ");
    w.key("trees");
    w.integer(static_cast<long long>(m.tree_count()));
    w.raw(",\n  ");
    w.key("depth");
    w.integer(m.topology().depth());
    w.raw(",\n  ");
    w.key("cov_epsilon");
    w.number(forest.cov_epsilon);
    w.raw(",\n  ");
    w.key("feature_standardization");
    write_stats(w, forest.feature_stats);
    w.raw(",\n  ");
    w.key("target_standardization");
    write_stats(w, forest.target_stats);
    w.raw(",\n  ");
    w.key("backbone");
    w.raw("{\n    ");
    w.key("layers");
    w.raw("[");
    const auto& layers = m.backbone().layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        w.raw(l ? ",\n      {" : "\n      {");
        w.key("inputs");
        w.integer(layers[l].inputs());
        w.raw(", ");
        w.key("outputs");
        w.integer(layers[l].outputs());
        w.raw(", ");
        w.key("activation");
        w.raw(l + 1 < layers.size() ? "\"relu\"" : "\"identity\"");
        w.raw(",\n       ");
        w.key("weights");
        w.row_major(layers[l].weights);
        w.raw(",\n       ");
        w.key("bias");
        w.vector(layers[l].bias);
        w.raw("}");
    }
    w.raw("\n    ]\n  },\n  ");
    w.key("forest");
    w.raw("[");
    for (std::size_t k = 0; k < m.tree_count(); ++k) {
        const Tree& tree = m.tree(k);
        w.raw(k ? ",\n    {" : "\n    {");
        w.key("unit_of_node");
        w.raw("[");
        for (std::size_t n = 0; n < tree.index.size(); ++n) {
            if (n) w.raw(", ");
            w.integer(static_cast<long long>(tree.index[n]));
        }
        w.raw("],\n     ");
        w.key("leaves");
        w.raw("[");
        for (std::size_t l = 0; l < tree.leaves.size(); ++l) {
            w.raw(l ? ",\n       {" : "\n       {");
            w.key("mean");
            w.vector(tree.leaves[l].mean());
            w.raw(", ");
            w.key("cov");
            w.row_major(tree.leaves[l].cov());
            w.raw("}");
        }
        w.raw("\n     ]}");
    }
    w.raw("\n  ]\n}\n");
    return w.str();
}

TrainedForest model_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelFormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    const std::string root = "model";
    const json& format = member(doc, "format", root);
    if (!format.is_string() || format.get<std::string>() != kModelFormat) {
        throw ModelFormatError("not a model file (format tag is not \"" + std::string(kModelFormat) + "\")");
    }
    const json& version = member(doc, "version", root);
    if (!version.is_number_integer() || version.get<long long>() != kModelVersion) {
        throw ModelFormatError("unsupported model version " + version.dump() + " (this build reads version " +
                               std::to_string(kModelVersion) + ")");
    }
    const Eigen::Index d_x = read_count(doc, "d_x", root);
    const Eigen::Index d_y = read_count(doc, "d_y", root);
    const Eigen::Index units = read_count(doc, "output_units", root);
    const Eigen::Index tree_count = read_count(doc, "trees", root);
    const Eigen::Index depth = read_count(doc, "depth", root);
    if (d_x < 1 || d_y < 1 || units < 1 || tree_count < 1 || depth < 1 || depth > 20) {
        throw ModelFormatError("model dimensions out of range");
    }
    const json& eps = member(doc, "cov_epsilon", root);
    if (!eps.is_number() || !(eps.get<double>() > 0.0)) {
        throw ModelFormatError("cov_epsilon must be a positive number");
    }

    TrainedForest out;
    out.cov_epsilon = eps.get<double>();
    out.feature_stats = read_stats(member(doc, "feature_standardization", root), d_x, "feature_standardization");
    out.target_stats = read_stats(member(doc, "target_standardization", root), d_y, "target_standardization");

    try {
        const json& layers_doc = member(member(doc, "backbone", root), "layers", "backbone");
        if (!layers_doc.is_array() || layers_doc.empty()) {
            throw ModelFormatError("backbone.layers must be a non-empty array");
        }
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l < layers_doc.size(); ++l) {
            const std::string where = "backbone.layers[" + std::to_string(l) + "]";
            const json& ld = layers_doc[l];
            const Eigen::Index in = read_count(ld, "inputs", where);
            const Eigen::Index outputs = read_count(ld, "outputs", where);
            const json& act = member(ld, "activation", where);
            const char* expected = l + 1 < layers_doc.size() ? "relu" : "identity";
            if (!act.is_string() || act.get<std::string>() != expected) {
                throw ModelFormatError(where + ": activation must be \"" + expected + "\"");
            }
            layers.push_back({read_row_major(member(ld, "weights", where), outputs, in, where + ".weights"),
                              read_vector(member(ld, "bias", where), outputs, where + ".bias")});
        }
        Backbone backbone(std::move(layers));
        if (backbone.input_dim() != d_x || backbone.output_units() != units) {
            throw ModelFormatError("backbone shape does not match d_x / output_units");
        }

        const TreeTopology topology(static_cast<int>(depth));
        const json& forest_doc = member(doc, "forest", root);
        if (!forest_doc.is_array() || static_cast<Eigen::Index>(forest_doc.size()) != tree_count) {
            throw ModelFormatError("forest must list " + std::to_string(tree_count) + " trees");
        }
        std::vector<Tree> trees;
        for (std::size_t k = 0; k < forest_doc.size(); ++k) {
            const std::string where = "forest[" + std::to_string(k) + "]";
            const json& td = forest_doc[k];
            const json& units_doc = member(td, "unit_of_node", where);
            if (!units_doc.is_array() || units_doc.size() != topology.split_count()) {
                throw ModelFormatError(where + ".unit_of_node must have " +
                                       std::to_string(topology.split_count()) + " entries");
            }
            std::vector<std::size_t> unit_of_node;
            for (const auto& u : units_doc) {
                if (!u.is_number_integer() || u.get<long long>() < 0) {
                    throw ModelFormatError(where + ".unit_of_node entries must be non-negative integers");
                }
                unit_of_node.push_back(u.get<std::size_t>());
            }
            Tree tree;
            tree.index = IndexFunction(std::move(unit_of_node), static_cast<std::size_t>(units));
            const json& leaves_doc = member(td, "leaves", where);
            if (!leaves_doc.is_array() || leaves_doc.size() != topology.leaf_count()) {
                throw ModelFormatError(where + ".leaves must have " + std::to_string(topology.leaf_count()) +
                                       " entries");
            }
            for (std::size_t l = 0; l < leaves_doc.size(); ++l) {
                const std::string lw = where + ".leaves[" + std::to_string(l) + "]";
                tree.leaves.emplace_back(read_vector(member(leaves_doc[l], "mean", lw), d_y, lw + ".mean"),
                                         read_row_major(member(leaves_doc[l], "cov", lw), d_y, d_y, lw + ".cov"),
                                         out.cov_epsilon);
            }
            trees.push_back(std::move(tree));
        }
        out.model = ForestModel(std::move(backbone), topology, std::move(trees), d_y);
    } catch (const std::invalid_argument& e) {
        throw ModelFormatError(std::string("invalid model: ") + e.what());
    }
    return out;
}

void save_model(const std::filesystem::path& path, const TrainedForest& forest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file '" + path.string() + "'");
    out << model_to_string(forest);
    if (!out) throw std::runtime_error("failed writing model file '" + path.string() + "'");
}

TrainedForest load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFormatError("cannot open model file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_string(buffer.str());
}

std::string report_to_string(const TrainReport& report, const TrainConfig& config) {
    json doc;
    doc["gradient_steps"] = report.gradient_steps;
    doc["leaf_update_count"] = report.leaf_updates.size();
    doc["skipped_steps"] = report.skipped_steps;
    doc["underflow_events"] = report.underflow_events;
    doc["starved_leaves"] = report.starved_leaves;
    doc["floor_events"] = report.floor_events;
    doc["stopped_early"] = report.stopped_early;
    doc["window_losses"] = report.window_losses;
    json updates = json::array();
    for (const auto& u : report.leaf_updates) {
        updates.push_back({{"after_step", u.after_step},
                           {"window_samples", u.window_samples},
                           {"nll_before", u.nll_before},
                           {"nll_after", u.nll_after},
                           {"floor_events", u.floor_events},
                           {"starved_leaves", u.starved_leaves}});
    }
    doc["leaf_updates"] = std::move(updates);
    doc["warnings"] = report.warnings;
    doc["final_loss"] = report.final_loss;
    doc["train_metrics"] = {{"mae", report.train_metrics.mae},
                            {"cs", report.train_metrics.cs},
                            {"cs_level", report.train_metrics.cs_level},
                            {"count", report.train_metrics.count},
                            {"within_count", report.train_metrics.within_count}};
    doc["wall_seconds"] = report.wall_seconds;
    doc["config"] = {{"trees", config.trees},
                     {"depth", config.depth},
                     {"output_units", config.output_units},
                     {"hidden_layers", config.hidden_layers},
                     {"leaf_update_iterations", config.leaf_update_iterations},
                     {"batches_per_leaf_update", config.batches_per_leaf_update},
                     {"batch_size", config.batch_size},
                     {"max_iterations", config.max_iterations},
                     {"learning_rate", config.learning_rate},
                     {"lr_decay", config.lr_decay},
                     {"lr_decay_interval", config.lr_decay_interval},
                     {"cov_epsilon", config.cov_epsilon},
                     {"seed", config.seed},
                     {"leaf_init_permute", config.leaf_init_permute},
                     {"final_leaf_refit", config.final_leaf_refit},
                     {"early_stop", config.early_stop}};
    return doc.dump(2) + "\n";
}

}  // namespace drf
