// sadmil: command-line driver for data generation, training, evaluation,
// alpha sweeps and attention-trace export.
//
// Exit codes: 0 ok, 1 configuration error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sadmil/sadmil.hpp"

namespace fs = std::filesystem;
using namespace sadmil;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    std::string data;
    std::string checkpoint;
    std::size_t parallel = 0;
    std::optional<std::uint64_t> seed;
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_config_echo(const std::string& path, const ExperimentConfig& cfg) {
    write_text_file(path, to_json(cfg).dump(2) + "\n");
}

DatasetSplits load_or_generate(const CommonOptions& opt, ExperimentConfig& cfg) {
    std::vector<Bag> bags = opt.data.empty() ? generate(cfg.data) : load_bags(opt.data);
    if (bags.empty()) throw DataError("dataset is empty");
    const std::size_t f = bags.front().feature_dim();
    for (const auto& b : bags)
        if (b.feature_dim() != f) throw DataError("bag '" + b.id + "' has a different feature dimension");
    cfg.model.input_dim = f;
    cfg.model.validate();
    return split(bags, cfg.split.fractions, cfg.split.seed);
}

int cmd_gen_data(const CommonOptions& opt) {
    ExperimentConfig cfg = load_config(opt.config_path, opt.overrides);
    if (opt.seed) cfg.data.seed = *opt.seed;
    cfg.data.validate();
    if (opt.out.empty()) throw ConfigError("--out is required");
    write_config_echo(opt.out + ".config.json", cfg);

    const auto bags = generate(cfg.data);
    save_bags(bags, opt.out);
    std::size_t pos = 0, lo = bags.front().size(), hi = 0;
    for (const auto& b : bags) {
        pos += static_cast<std::size_t>(b.label);
        lo = std::min(lo, b.size());
        hi = std::max(hi, b.size());
    }
    std::cout << "bags: " << bags.size() << "\npositive fraction: "
              << format_double(static_cast<double>(pos) / static_cast<double>(bags.size())) << "\nbag sizes: " << lo
              << "-" << hi << "\nwritten: " << opt.out << '\n';
    return 0;
}

int cmd_train(const CommonOptions& opt) {
    if (!opt.checkpoint.empty())
        throw ConfigError("resuming from a checkpoint is not supported; train always starts from a fresh initialization");
    ExperimentConfig cfg = load_config(opt.config_path, opt.overrides);
    if (opt.seed) cfg.train.seed = *opt.seed;
    if (opt.out.empty()) throw ConfigError("--out is required");
    ensure_dir(opt.out);
    write_config_echo(join(opt.out, "config.json"), cfg);

    const DatasetSplits data = load_or_generate(opt, cfg);
    write_config_echo(join(opt.out, "config.json"), cfg);
    save_bags(data.test, join(opt.out, "test_bags.jsonl"));

    std::cerr << "training " << mode_tag(cfg.model, cfg.loss) << " on " << data.train.size() << " bags ("
              << data.val.size() << " val, " << data.test.size() << " test)\n";
    TrainResult result = train(data, cfg.model, cfg.train, cfg.loss);
    const RunReport& report = result.report;

    write_text_file(join(opt.out, "checkpoint.json"),
                    checkpoint_to_json(result.params, cfg.train.seed, to_json(cfg)).dump(2) + "\n");
    write_text_file(join(opt.out, "report.json"), report_to_json(report).dump(2) + "\n");
    write_text_file(join(opt.out, "timing.json"), timing_to_json(report).dump(2) + "\n");
    if (report.test) {
        std::ostringstream csv;
        write_metrics_csv(csv, metrics_rows(report.mode, report.alpha, 0, *report.test));
        write_text_file(join(opt.out, "metrics.csv"), csv.str());
        for (const auto& w : report.test->warnings) std::cerr << "warning: " << w << '\n';
    }
    std::cerr << "stopped at epoch " << report.stopping_epoch << " (best " << report.best_epoch << ") in "
              << report.duration_seconds << " s\n";
    return 0;
}

struct LoadedModel {
    ModelParams params;
    ExperimentConfig cfg;
};

LoadedModel load_checkpoint(const CommonOptions& opt) {
    if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    const nlohmann::json j = read_json_file(opt.checkpoint);
    LoadedModel m{checkpoint_from_json(j), {}};
    // The checkpoint's echo supplies defaults (threshold, loss tag); explicit
    // --config/--set take precedence.
    nlohmann::json base = j.contains("config") && j["config"].is_object() ? j["config"] : nlohmann::json::object();
    if (!opt.config_path.empty()) base.merge_patch(read_json_file(opt.config_path));
    for (const auto& o : opt.overrides) base.merge_patch(parse_override(o));
    m.cfg = config_from_json(base);
    m.cfg.model = m.params.config;
    return m;
}

std::vector<Bag> load_eval_bags(const CommonOptions& opt, const ModelParams& params) {
    if (opt.data.empty()) throw ConfigError("--data is required");
    auto bags = load_bags(opt.data);
    if (bags.empty()) throw DataError("dataset is empty");
    for (const auto& b : bags)
        if (b.feature_dim() != params.config.input_dim)
            throw DataError("bag '" + b.id + "' has " + std::to_string(b.feature_dim()) +
                            " features but the checkpoint expects " + std::to_string(params.config.input_dim));
    return bags;
}

int cmd_eval(const CommonOptions& opt) {
    const LoadedModel m = load_checkpoint(opt);
    const auto bags = load_eval_bags(opt, m.params);
    const Evaluation ev = evaluate(bags, m.params, m.cfg.train.threshold);
    for (const auto& w : ev.warnings) std::cerr << "warning: " << w << '\n';

    std::ostringstream csv;
    write_metrics_csv(csv, metrics_rows(mode_tag(m.cfg.model, m.cfg.loss), m.cfg.loss.alpha, 0, ev));
    if (opt.out.empty())
        std::cout << csv.str();
    else
        write_text_file(opt.out, csv.str());
    return 0;
}

int cmd_export_attention(const CommonOptions& opt) {
    const LoadedModel m = load_checkpoint(opt);
    if (m.params.config.pooling != Pooling::attention)
        throw ConfigError("checkpoint uses " + to_string(m.params.config.pooling) + " pooling: no attention to export");
    if (opt.out.empty()) throw ConfigError("--out is required");
    const auto bags = load_eval_bags(opt, m.params);
    ensure_dir(opt.out);
    const Evaluation ev = evaluate(bags, m.params, m.cfg.train.threshold);

    std::set<std::string> seen;
    for (const auto& t : ev.traces) {
        if (!seen.insert(t.bag_id).second) throw DataError("duplicate bag id '" + t.bag_id + "'");
        std::ostringstream csv;
        write_trace_csv(csv, t);
        write_text_file(join(opt.out, t.bag_id + ".csv"), csv.str());
    }
    std::cout << "exported " << ev.traces.size() << " attention traces to " << opt.out << '\n';
    return 0;
}

int cmd_sweep(const CommonOptions& opt) {
    ExperimentConfig cfg = load_config(opt.config_path, opt.overrides);
    if (opt.seed) cfg.sweep.master_seed = *opt.seed;
    if (opt.parallel) cfg.sweep.parallel = opt.parallel;
    if (opt.out.empty()) throw ConfigError("--out is required");
    ensure_dir(opt.out);
    write_config_echo(join(opt.out, "config.json"), cfg);

    const DatasetSplits data = load_or_generate(opt, cfg);
    if (data.test.empty()) throw ConfigError("sweep needs a non-empty test split");
    write_config_echo(join(opt.out, "config.json"), cfg);

    const SweepTable table = sweep_alpha(data, cfg.model, cfg.train, cfg.loss, cfg.sweep);
    std::ostringstream runs, summary;
    write_sweep_csv(runs, table);
    write_sweep_summary_csv(summary, table);
    write_text_file(join(opt.out, "sweep.csv"), runs.str());
    write_text_file(join(opt.out, "sweep_summary.csv"), summary.str());
    std::cout << summary.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Smooth-attention multiple instance learning"};
    app.require_subcommand(1);

    CommonOptions opt;
    const auto add_common = [&opt](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "JSON config file");
        sub->add_option("--set", opt.overrides, "override a config value, e.g. --set loss.alpha=0.5");
        sub->add_option("--seed", opt.seed, "seed override");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic bag file");
    add_common(gen);
    gen->add_option("--out", opt.out, "output JSON Lines file")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    add_common(tr);
    tr->add_option("--data", opt.data, "bag file (generated from config when omitted)");
    tr->add_option("--out", opt.out, "output directory")->required();
    tr->add_option("--checkpoint", opt.checkpoint, "not supported for training");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint at scan and slice level");
    add_common(ev);
    ev->add_option("--checkpoint", opt.checkpoint, "checkpoint JSON")->required();
    ev->add_option("--data", opt.data, "bag file")->required();
    ev->add_option("--out", opt.out, "metrics CSV (stdout when omitted)");

    auto* sw = app.add_subcommand("sweep", "alpha sweep over smoothness modes");
    add_common(sw);
    sw->add_option("--data", opt.data, "bag file (generated from config when omitted)");
    sw->add_option("--out", opt.out, "output directory")->required();
    sw->add_option("--parallel", opt.parallel, "concurrent runs");

    auto* ex = app.add_subcommand("export-attention", "write per-bag attention traces as CSV");
    add_common(ex);
    ex->add_option("--checkpoint", opt.checkpoint, "checkpoint JSON")->required();
    ex->add_option("--data", opt.data, "bag file")->required();
    ex->add_option("--out", opt.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(opt);
        if (tr->parsed()) return cmd_train(opt);
        if (ev->parsed()) return cmd_eval(opt);
        if (sw->parsed()) return cmd_sweep(opt);
        if (ex->parsed()) return cmd_export_attention(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
