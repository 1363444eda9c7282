// drf: train, predict, eval and synth subcommands for deep regression forests.
//
// Exit codes: 0 success, 1 configuration/usage/model-file error, 2 data error,
// 3 training failure. Every subcommand ends with one "RESULT ..." line.

#include "drf/dataset.hpp"
#include "drf/metrics.hpp"
#include "drf/serialization.hpp"
#include "drf/synth.hpp"
#include "drf/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kDataError = 2, kTrainingFailure = 3 };

int fail(int code, const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return code;
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::string report;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
    drf::TrainConfig config;
    try {
        config = drf::load_train_config(args.config);
    } catch (const drf::ConfigError& e) {
        return fail(kConfigError, std::string("config: ") + e.what());
    }
    if (args.seed) config.seed = *args.seed;

    drf::Dataset data;
    try {
        data = drf::load_csv(args.data);
    } catch (const std::exception& e) {
        return fail(kDataError, std::string("data: ") + e.what());
    }
    try {
        config.validate(data.size());
    } catch (const std::invalid_argument& e) {
        return fail(kConfigError, std::string("config: ") + e.what());
    }

    drf::TrainResult result;
    try {
        result = drf::train(data, config);
    } catch (const std::exception& e) {
        return fail(kTrainingFailure, std::string("training failed: ") + e.what());
    }
    for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << "\n";

    const std::string report_path = args.report.empty() ? args.out + ".report.json" : args.report;
    try {
        drf::save_model(args.out, result.forest);
        std::ofstream report(report_path, std::ios::binary);
        if (!report) throw std::runtime_error("cannot write report '" + report_path + "'");
        report << drf::report_to_string(result.report, config);
    } catch (const std::exception& e) {
        return fail(kTrainingFailure, e.what());
    }
    const auto& m = result.report.train_metrics;
    std::cout << "RESULT train_mae " << fixed4(m.mae) << ", train_cs " << fixed4(m.cs) << ", final_loss "
              << fixed4(result.report.final_loss) << ", steps " << result.report.gradient_steps
              << ", leaf_updates " << result.report.leaf_updates.size() << "\n";
    return kOk;
}

int run_predict(const std::string& model_path, const std::string& data_path, const std::string& out_path) {
    drf::TrainedForest forest;
    try {
        forest = drf::load_model(model_path);
    } catch (const std::exception& e) {
        return fail(kConfigError, std::string("model: ") + e.what());
    }
    drf::Dataset data;
    try {
        data = drf::load_csv(data_path, drf::CsvSchema{.require_targets = false});
    } catch (const std::exception& e) {
        return fail(kDataError, std::string("data: ") + e.what());
    }
    if (data.feature_dim() != forest.model.input_dim()) {
        return fail(kDataError, "data has " + std::to_string(data.feature_dim()) + " feature columns, model expects " +
                                    std::to_string(forest.model.input_dim()));
    }
    const Eigen::MatrixXd pred = forest.predict(data.features);
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < pred.cols(); ++j) header.push_back("y_pred" + std::to_string(j));
    try {
        drf::write_csv_table(out_path, header, pred);
    } catch (const std::exception& e) {
        return fail(kDataError, e.what());
    }
    std::cout << "RESULT rows " << pred.rows() << ", d_y " << pred.cols() << "\n";
    return kOk;
}

int run_eval(const std::string& pred_path, const std::string& truth_path, double level,
             const std::string& metrics_path) {
    Eigen::MatrixXd pred;
    Eigen::MatrixXd truth;
    try {
        const auto pred_table = drf::read_csv_table(pred_path);
        if (pred_table.column("y_pred0") < 0) throw drf::DataError("missing column 'y_pred0' in predictions");
        pred = pred_table.prefixed("y_pred", -1);
        const auto truth_table = drf::read_csv_table(truth_path);
        if (truth_table.column("y0") < 0) throw drf::DataError("missing column 'y0' in truth file");
        truth = truth_table.prefixed("y", pred.cols());
    } catch (const std::exception& e) {
        return fail(kDataError, e.what());
    }
    if (pred.rows() != truth.rows()) {
        return fail(kDataError, "prediction file has " + std::to_string(pred.rows()) + " rows, truth file has " +
                                    std::to_string(truth.rows()));
    }
    if (pred.rows() == 0) return fail(kDataError, "no rows to evaluate");
    drf::MetricsRecord m;
    try {
        m = drf::compute_metrics(pred, truth, level);
    } catch (const std::exception& e) {
        return fail(kDataError, e.what());
    }
    if (!metrics_path.empty()) {
        nlohmann::json doc{{"mae", m.mae},
                           {"cs", m.cs},
                           {"cs_level", m.cs_level},
                           {"count", m.count},
                           {"within_count", m.within_count}};
        std::ofstream out(metrics_path, std::ios::binary);
        if (!out) return fail(kDataError, "cannot write metrics file '" + metrics_path + "'");
        out << doc.dump(2) << "\n";
    }
    std::cout << "RESULT MAE " << fixed4(m.mae) << ", CS " << fixed4(m.cs) << "\n";
    return kOk;
}

int run_synth(const drf::SynthSpec& spec, const std::string& out_path) {
    drf::Dataset data;
    try {
        data = drf::generate_synthetic(spec);
    } catch (const std::invalid_argument& e) {
        return fail(kConfigError, e.what());
    }
    try {
        drf::save_csv(out_path, data);
    } catch (const std::exception& e) {
        return fail(kDataError, e.what());
    }
    std::cout << "RESULT rows " << data.size() << ", task " << spec.task << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep regression forests: soft decision trees with Gaussian leaves over a learned feature map"};
    app.require_subcommand(1);

    TrainArgs train_args;
    std::uint64_t seed_value = 0;
    auto* train = app.add_subcommand("train", "Train a forest on a CSV dataset");
    train->add_option("--config", train_args.config, "JSON training configuration")->required();
    train->add_option("--data", train_args.data, "Training CSV (x0.., y0..)")->required();
    train->add_option("--out", train_args.out, "Model file to write")->required();
    train->add_option("--report", train_args.report, "Report file (default: <out>.report.json)");
    auto* seed_opt = train->add_option("--seed", seed_value, "Override the config seed");

    std::string model_path, data_path, out_path;
    auto* predict = app.add_subcommand("predict", "Predict targets for a CSV of features");
    predict->add_option("--model", model_path, "Model file")->required();
    predict->add_option("--data", data_path, "Input CSV (x0..; targets optional)")->required();
    predict->add_option("--out", out_path, "Prediction CSV to write")->required();

    std::string pred_path, truth_path, metrics_path;
    double cs_level = drf::kDefaultCsLevel;
    auto* eval = app.add_subcommand("eval", "MAE and cumulative score of predictions");
    eval->add_option("--pred", pred_path, "Prediction CSV (y_pred0..)")->required();
    eval->add_option("--truth", truth_path, "Ground-truth CSV (y0..)")->required();
    eval->add_option("--cs-level", cs_level, "Error level l for CS(l)")->check(CLI::NonNegativeNumber);
    eval->add_option("--metrics", metrics_path, "Optional JSON metrics file");

    drf::SynthSpec spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic regression dataset");
    synth->add_option("--task", spec.task, "piecewise | bimodal | hetero-noise")->required();
    synth->add_option("--n", spec.samples, "Number of samples")->required()->check(CLI::PositiveNumber);
    synth->add_option("--noise", spec.noise, "Noise level")->required()->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", spec.seed, "RNG seed")->required();
    synth->add_option("--out", synth_out, "CSV file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (*train) {
        if (*seed_opt) train_args.seed = seed_value;
        return run_train(train_args);
    }
    if (*predict) return run_predict(model_path, data_path, out_path);
    if (*eval) return run_eval(pred_path, truth_path, cs_level, metrics_path);
    return run_synth(spec, synth_out);
}
