#include <CLI11.hpp>
#include <iostream>

#include "sublearn/cli.hpp"

using sublearn::json;
namespace cli = sublearn::cli;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // dotted.key=value pairs
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "JSON config file");
    cmd->add_option("--set", args.overrides,
                    "override a config value, e.g. --set regression.epochs=50");
}

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);  // bare strings stay strings
    }
}

void apply_override(json& cfg, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like key.path=value");
    std::string path = spec.substr(0, eq);
    json value = parse_value(spec.substr(eq + 1));
    json* cursor = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*cursor)[key] = value;
            break;
        }
        cursor = &(*cursor)[key];
        start = dot + 1;
    }
}

json build_config(const CommonArgs& args) {
    json cfg = args.config_path.empty() ? cli::default_config()
                                        : cli::load_config(args.config_path);
    for (const auto& o : args.overrides) apply_override(cfg, o);
    return cfg;
}

int guarded(int (*fn)(const json&), const json& cfg) {
    try {
        return fn(cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return cli::kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kValidationError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"learning submodular set functions from data"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_reg_args, train_sel_args, eval_args, audit_args,
        report_args;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen, gen_args);
    std::string planted;
    int n = -1, d = -1;
    gen->add_option("--planted", planted, "planted function tag");
    gen->add_option("--n", n, "ground-set size");
    gen->add_option("--d", d, "feature dimension");

    auto* train_reg =
        app.add_subcommand("train-regression", "fit a model to (set, value) pairs");
    add_common(train_reg, train_reg_args);
    std::string resume;
    int epochs = -1;
    double rho = -1.0;
    std::string mode, model_kind;
    train_reg->add_option("--resume", resume, "resume from checkpoint_final.json");
    train_reg->add_option("--epochs", epochs, "training epochs");
    train_reg->add_option("--rho", rho, "consistency regularizer weight");
    train_reg->add_option("--mode", mode, "end_to_end or decoupled");
    train_reg->add_option("--model", model_kind, "model kind");

    auto* train_sel = app.add_subcommand(
        "train-select", "train from (universe, high-value-subset) pairs");
    add_common(train_sel, train_sel_args);
    double tau = -1.0, sinkhorn_t = -1.0;
    int sinkhorn_iters = -1, inner_steps = -1, outer_steps = -1;
    train_sel->add_option("--tau", tau, "softmax temperature");
    train_sel->add_option("--sinkhorn-t", sinkhorn_t, "Sinkhorn temperature");
    train_sel->add_option("--sinkhorn-iters", sinkhorn_iters,
                          "Sinkhorn iteration count");
    train_sel->add_option("--inner-steps", inner_steps,
                          "adversary updates per cycle");
    train_sel->add_option("--outer-steps", outer_steps,
                          "model updates per cycle");

    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint");
    add_common(evaluate, eval_args);
    std::string ckpt_eval;
    evaluate->add_option("--checkpoint", ckpt_eval, "checkpoint to score");

    auto* audit = app.add_subcommand("audit", "shape audits for a checkpoint");
    add_common(audit, audit_args);
    std::string ckpt_audit;
    audit->add_option("--checkpoint", ckpt_audit, "checkpoint to audit");

    auto* report = app.add_subcommand("report", "summarize run reports as CSV");
    add_common(report, report_args);
    std::vector<std::string> runs;
    report->add_option("--runs", runs, "run directories with report.json");

    std::string out_dir, data_dir;
    long long seed = -1;
    for (auto* cmd : {gen, train_reg, train_sel, evaluate, audit, report}) {
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--data-dir", data_dir, "dataset directory");
        cmd->add_option("--seed", seed, "root seed");
    }

    CLI11_PARSE(app, argc, argv);

    auto finish = [&](CommonArgs& args) {
        if (!out_dir.empty()) args.overrides.push_back("out_dir=" + out_dir);
        if (!data_dir.empty())
            args.overrides.push_back("dataset.dir=" + data_dir);
        if (seed >= 0)
            args.overrides.push_back("seed=" + std::to_string(seed));
        return build_config(args);
    };

    try {
        if (gen->parsed()) {
            if (!planted.empty())
                gen_args.overrides.push_back("dataset.planted=" + planted);
            if (n > 0)
                gen_args.overrides.push_back("dataset.n=" + std::to_string(n));
            if (d > 0)
                gen_args.overrides.push_back("dataset.d=" + std::to_string(d));
            return guarded(cli::run_gen, finish(gen_args));
        }
        if (train_reg->parsed()) {
            if (!resume.empty())
                train_reg_args.overrides.push_back("resume=" + resume);
            if (epochs >= 0)
                train_reg_args.overrides.push_back("regression.epochs=" +
                                                   std::to_string(epochs));
            if (rho >= 0)
                train_reg_args.overrides.push_back("regression.rho=" +
                                                   std::to_string(rho));
            if (!mode.empty())
                train_reg_args.overrides.push_back("model.mode=" + mode);
            if (!model_kind.empty())
                train_reg_args.overrides.push_back("model.kind=" + model_kind);
            return guarded(cli::run_train_regression, finish(train_reg_args));
        }
        if (train_sel->parsed()) {
            if (tau > 0)
                train_sel_args.overrides.push_back("selection.tau=" +
                                                   std::to_string(tau));
            if (sinkhorn_t > 0)
                train_sel_args.overrides.push_back("selection.sinkhorn_t=" +
                                                   std::to_string(sinkhorn_t));
            if (sinkhorn_iters > 0)
                train_sel_args.overrides.push_back(
                    "selection.sinkhorn_iters=" + std::to_string(sinkhorn_iters));
            if (inner_steps > 0)
                train_sel_args.overrides.push_back("selection.inner_steps=" +
                                                   std::to_string(inner_steps));
            if (outer_steps > 0)
                train_sel_args.overrides.push_back("selection.outer_steps=" +
                                                   std::to_string(outer_steps));
            return guarded(cli::run_train_select, finish(train_sel_args));
        }
        if (evaluate->parsed()) {
            if (!ckpt_eval.empty())
                eval_args.overrides.push_back("checkpoint=" + ckpt_eval);
            return guarded(cli::run_evaluate, finish(eval_args));
        }
        if (audit->parsed()) {
            if (!ckpt_audit.empty())
                audit_args.overrides.push_back("checkpoint=" + ckpt_audit);
            return guarded(cli::run_audit, finish(audit_args));
        }
        if (report->parsed()) {
            json cfg = finish(report_args);
            if (!runs.empty()) cfg["runs"] = runs;
            return guarded(cli::run_report, cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kValidationError;
    }
    return cli::kValidationError;
}
