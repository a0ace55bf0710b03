#include "sublearn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace sublearn::cli {

namespace fs = std::filesystem;

json default_config() {
    return json{
        {"seed", 1},
        {"out_dir", "run"},
        {"dataset",
         {{"kind", "setvalue"},
          {"planted", "log"},
          {"n", 2000},
          {"d", 10},
          {"universe_size", 30},
          {"subset_size", 5},
          {"count", 500},
          {"dir", "data"}}},
        {"model",
         {{"kind", "monotone"},
          {"n_steps", 2},
          {"mode", "decoupled"},
          {"hidden", json::array({50, 50, 50})},
          {"integrand_output", "softplus"},
          {"alpha", 0.5},
          {"k", 10},
          {"lambda_init", 0.5},
          {"lambda_frozen", false},
          {"share_modular_weights", false},
          {"init_weight_scale", 1.0}}},
        {"quadrature",
         {{"outer_rule", "clenshaw_curtis"},
          {"outer_nodes", 33},
          {"inner_rule", "clenshaw_curtis"},
          {"inner_nodes", 33}}},
        {"regression",
         {{"epochs", 200},
          {"batch_size", 66},
          {"lr", 2e-3},
          {"weight_decay", 1e-4},
          {"rho", 1.0},
          {"select_window", 10}}},
        {"selection",
         {{"tau", 1.0},
          {"sinkhorn_t", 0.5},
          {"sinkhorn_iters", 50},
          {"outer_steps", 5},
          {"inner_steps", 1},
          {"epochs", 30},
          {"batch_size", 16},
          {"lr_theta", 2e-3},
          {"lr_omega", 2e-3},
          {"weight_decay", 1e-4},
          {"embed_hidden", json::array({32})},
          {"embed_width", 16}}},
        {"audit",
         {{"samples", 10000},
          {"universe", 60},
          {"tolerance", 1e-6},
          {"mono_tolerance", 1e-9},
          {"concavity_tolerance", 1e-4},
          {"grid", 100}}}};
}

namespace {

// overlay wins field by field
json merge(json base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) return overlay;
    for (const auto& [key, value] : overlay.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object())
            base[key] = merge(base[key], value);
        else
            base[key] = value;
    }
    return base;
}

std::uint64_t config_hash(const json& cfg) {
    const std::string dump = cfg.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

std::uint64_t dataset_seed(const json& cfg) {
    return Rng(cfg.at("seed").get<std::uint64_t>()).substream("data").seed();
}

FeatureTable load_table(const json& cfg) {
    const std::string dir = cfg.at("dataset").at("dir").get<std::string>();
    return read_features_csv(dir + "/features.csv");
}

// deterministic thirds for selection instances
void split_selection(const std::vector<UniverseSubsetInstance>& all,
                     std::uint64_t seed,
                     std::vector<UniverseSubsetInstance>& train,
                     std::vector<UniverseSubsetInstance>& dev,
                     std::vector<UniverseSubsetInstance>& test) {
    std::vector<int> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).substream("selection_folds");
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& inst = all[std::size_t(idx[i])];
        switch (i % 3) {
            case 0: train.push_back(inst); break;
            case 1: dev.push_back(inst); break;
            default: test.push_back(inst); break;
        }
    }
}

}  // namespace

json load_config(const std::string& path) {
    return merge(default_config(), read_json(path));
}

SetFnModelConfig model_config_from_json(const json& cfg) {
    const json& m = cfg.at("model");
    const json& q = cfg.at("quadrature");
    SetFnModelConfig mc;
    mc.kind = model_kind_from_string(m.at("kind").get<std::string>());
    mc.feature_dim = cfg.at("dataset").at("d").get<int>();
    mc.n_steps = m.at("n_steps").get<int>();
    mc.mode = shape_mode_from_string(m.at("mode").get<std::string>());
    mc.integrand.hidden = m.at("hidden").get<std::vector<int>>();
    mc.integrand.output_act =
        activation_from_string(m.at("integrand_output").get<std::string>());
    mc.aux.hidden = mc.integrand.hidden;
    mc.outer.rule = quad_rule_from_string(q.at("outer_rule").get<std::string>());
    mc.outer.nodes = q.at("outer_nodes").get<int>();
    mc.inner.rule = quad_rule_from_string(q.at("inner_rule").get<std::string>());
    mc.inner.nodes = q.at("inner_nodes").get<int>();
    mc.alpha = m.at("alpha").get<double>();
    mc.cardinality_k = m.at("k").get<int>();
    mc.lambda_init = m.at("lambda_init").get<double>();
    mc.lambda_frozen = m.at("lambda_frozen").get<bool>();
    mc.share_modular_weights = m.at("share_modular_weights").get<bool>();
    mc.init_weight_scale = m.at("init_weight_scale").get<double>();
    return mc;
}

SetFnModel build_model(const json& cfg) {
    const std::uint64_t seed =
        Rng(cfg.at("seed").get<std::uint64_t>()).substream("init").seed();
    return SetFnModel::create(model_config_from_json(cfg), seed);
}

RegressionConfig regression_config_from_json(const json& cfg) {
    const json& r = cfg.at("regression");
    RegressionConfig rc;
    rc.epochs = r.at("epochs").get<int>();
    rc.batch_size = r.at("batch_size").get<int>();
    rc.lr = r.at("lr").get<double>();
    rc.weight_decay = r.at("weight_decay").get<double>();
    rc.rho = r.at("rho").get<double>();
    rc.select_window = r.at("select_window").get<int>();
    rc.seed = Rng(cfg.at("seed").get<std::uint64_t>()).substream("train").seed();
    return rc;
}

SelectionConfig selection_config_from_json(const json& cfg) {
    const json& s = cfg.at("selection");
    SelectionConfig sc;
    sc.tau = s.at("tau").get<double>();
    sc.sinkhorn_t = s.at("sinkhorn_t").get<double>();
    sc.sinkhorn_iters = s.at("sinkhorn_iters").get<int>();
    sc.outer_steps = s.at("outer_steps").get<int>();
    sc.inner_steps = s.at("inner_steps").get<int>();
    sc.epochs = s.at("epochs").get<int>();
    sc.batch_size = s.at("batch_size").get<int>();
    sc.lr_theta = s.at("lr_theta").get<double>();
    sc.lr_omega = s.at("lr_omega").get<double>();
    sc.weight_decay = s.at("weight_decay").get<double>();
    sc.seed = Rng(cfg.at("seed").get<std::uint64_t>()).substream("train").seed();
    return sc;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount()) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

int run_gen(const json& cfg) {
    const json& d = cfg.at("dataset");
    const std::string dir = d.at("dir").get<std::string>();
    fs::create_directories(dir);

    const int n = d.at("n").get<int>();
    const int dim = d.at("d").get<int>();
    FeatureTable table = sample_features(n, dim, dataset_seed(cfg));
    write_features_csv(table, dir + "/features.csv");
    PlantedFn fn =
        PlantedFn::make(planted_tag_from_string(d.at("planted").get<std::string>()),
                        table);

    std::vector<std::string> files = {"features.csv"};
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "setvalue") {
        SetValueDataset ds = gen_setvalue_dataset(fn, table, dataset_seed(cfg));
        write_setvalue_file(ds, dir + "/instances.txt");
        write_fold_file(ds, dir + "/folds.csv");
        files.push_back("instances.txt");
        files.push_back("folds.csv");
    } else if (kind == "selection") {
        auto ds = gen_selection_dataset(fn, table, d.at("universe_size").get<int>(),
                                        d.at("subset_size").get<int>(),
                                        d.at("count").get<int>(),
                                        dataset_seed(cfg));
        write_selection_file(ds, dir + "/selection.txt");
        files.push_back("selection.txt");
    } else {
        throw std::invalid_argument("unknown dataset kind: " + kind);
    }

    json manifest;
    manifest["seed"] = cfg.at("seed");
    manifest["config"] = cfg;
    json hashes;
    for (const auto& f : files) hashes[f] = hex64(fnv1a_file(dir + "/" + f));
    manifest["files"] = std::move(hashes);
    write_json(manifest, dir + "/manifest.json");
    return kOk;
}

int run_train_regression(const json& cfg) {
    const std::string dir = cfg.at("dataset").at("dir").get<std::string>();
    const std::string out = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out);

    FeatureTable table = load_table(cfg);
    SetValueDataset ds = read_setvalue_file(dir + "/instances.txt");
    read_fold_file(ds, dir + "/folds.csv");

    SetFnModel model = build_model(cfg);
    RegressionConfig rc = regression_config_from_json(cfg);

    RegressionResume resume;
    const RegressionResume* resume_ptr = nullptr;
    if (cfg.contains("resume")) {
        const json state = read_json(cfg.at("resume").get<std::string>());
        SetFnModel loaded = SetFnModel::from_checkpoint(state.at("model"));
        model.params() = loaded.params();
        model.set_limits({loaded.config().inner.b_max, loaded.config().x_max});
        resume = RegressionResume::from_final_state(state);
        resume_ptr = &resume;
    }

    RegressionResult result = train_regression(model, table, ds, rc, resume_ptr);

    write_json(model.checkpoint(), out + "/checkpoint.json");
    if (!result.final_state.empty())
        write_json(result.final_state, out + "/checkpoint_final.json");
    {
        std::ofstream metrics(out + "/metrics.csv");
        metrics << std::setprecision(17) << "epoch,train_rmse,dev_rmse\n";
        for (const auto& em : result.metrics)
            metrics << em.epoch << ',' << em.train_rmse << ',' << em.dev_rmse
                    << '\n';
    }
    json report{{"status",
                 result.status == TrainStatus::Ok ? "ok" : "diverged"},
                {"test_rmse", result.test_rmse},
                {"best_epoch", result.best_epoch},
                {"best_dev_rmse", result.best_dev_rmse},
                {"config_hash", hex64(config_hash(cfg))},
                {"seed", cfg.at("seed")},
                {"model_kind", cfg.at("model").at("kind")},
                {"planted", cfg.at("dataset").at("planted")}};
    write_json(report, out + "/report.json");
    std::cout << "test_rmse " << result.test_rmse << '\n';
    return result.status == TrainStatus::Ok ? kOk : kDivergence;
}

int run_train_select(const json& cfg) {
    const std::string dir = cfg.at("dataset").at("dir").get<std::string>();
    const std::string out = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out);

    FeatureTable table = load_table(cfg);
    auto all = read_selection_file(dir + "/selection.txt");
    std::vector<UniverseSubsetInstance> train, dev, test;
    split_selection(all, cfg.at("seed").get<std::uint64_t>(), train, dev, test);

    SetFnModel model = build_model(cfg);
    SelectionConfig sc = selection_config_from_json(cfg);

    const json& s = cfg.at("selection");
    MlpSpec embed;
    embed.input_width = table.dim();
    embed.hidden = s.at("embed_hidden").get<std::vector<int>>();
    embed.output_width = s.at("embed_width").get<int>();
    int max_subset = 1;
    for (const auto& inst : all)
        max_subset = std::max(max_subset, int(inst.subset.size()));
    SeedNetwork adversary(
        embed, max_subset,
        Rng(cfg.at("seed").get<std::uint64_t>()).substream("adversary").seed());

    SelectionTrainResult result =
        train_maxmin(model, adversary, table, train, dev, sc);

    write_json(model.checkpoint(), out + "/checkpoint.json");
    write_json(adversary.checkpoint(), out + "/adversary.json");
    {
        std::ofstream metrics(out + "/metrics.csv");
        metrics << std::setprecision(17) << "epoch,objective,dev_mjc,seconds\n";
        for (const auto& ep : result.epochs)
            metrics << ep.epoch << ',' << ep.objective << ',' << ep.dev_mjc
                    << ',' << ep.seconds << '\n';
    }
    {
        std::ofstream preds(out + "/predictions.txt");
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto seq = greedy_select(model, table, test[i].universe,
                                           int(test[i].subset.size()));
            preds << i << ':';
            for (std::size_t j = 0; j < seq.size(); ++j)
                preds << (j ? " " : " ") << seq[j];
            preds << '\n';
        }
    }
    const double test_mjc =
        test.empty() ? 0.0 : mean_jaccard_of_model(model, table, test);
    const double test_ndcg =
        test.empty() ? 0.0 : mean_ndcg_of_model(model, table, test);
    json report{{"status", result.diverged ? "diverged" : "ok"},
                {"best_epoch", result.best_epoch},
                {"best_dev_mjc", result.best_dev_mjc},
                {"test_mjc", test_mjc},
                {"test_ndcg10", test_ndcg},
                {"config_hash", hex64(config_hash(cfg))},
                {"seed", cfg.at("seed")},
                {"model_kind", cfg.at("model").at("kind")},
                {"planted", cfg.at("dataset").at("planted")}};
    write_json(report, out + "/report.json");
    std::cout << "test_mjc " << test_mjc << " test_ndcg10 " << test_ndcg << '\n';
    return result.diverged ? kDivergence : kOk;
}

int run_evaluate(const json& cfg) {
    const std::string dir = cfg.at("dataset").at("dir").get<std::string>();
    const std::string out = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out);
    FeatureTable table = load_table(cfg);
    SetFnModel model =
        SetFnModel::from_checkpoint(read_json(cfg.at("checkpoint").get<std::string>()));

    json evaluation;
    const std::string kind = cfg.at("dataset").at("kind").get<std::string>();
    if (kind == "setvalue") {
        SetValueDataset ds = read_setvalue_file(dir + "/instances.txt");
        read_fold_file(ds, dir + "/folds.csv");
        evaluation["test_rmse"] = evaluate_rmse(model, table, ds.fold_sets(2),
                                                ds.fold_targets(2));
    } else {
        auto all = read_selection_file(dir + "/selection.txt");
        std::vector<UniverseSubsetInstance> train, dev, test;
        split_selection(all, cfg.at("seed").get<std::uint64_t>(), train, dev,
                        test);
        evaluation["test_mjc"] = mean_jaccard_of_model(model, table, test);
        evaluation["test_ndcg10"] = mean_ndcg_of_model(model, table, test);
    }
    write_json(evaluation, out + "/evaluation.json");
    std::cout << evaluation.dump(2) << '\n';
    return kOk;
}

int run_audit(const json& cfg) {
    const std::string out = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out);
    SetFnModel model =
        SetFnModel::from_checkpoint(read_json(cfg.at("checkpoint").get<std::string>()));
    FeatureTable table = load_table(cfg);

    const json& a = cfg.at("audit");
    ChainAuditConfig chain;
    chain.universe = std::min(a.at("universe").get<int>(), table.count());
    chain.samples = a.at("samples").get<long long>();
    chain.seed = Rng(cfg.at("seed").get<std::uint64_t>()).substream("audit").seed();
    chain.tolerance = a.at("tolerance").get<double>();
    chain.mono_tolerance = a.at("mono_tolerance").get<double>();

    json reports;
    switch (model.config().kind) {
        case ModelKind::Monotone:
        case ModelKind::FixedDsf: {
            chain.alpha = 1.0;
            auto r = audit_submodular(batch_values_for(model, table), chain);
            reports["submodular"] = r.submodular.to_json();
            reports["monotonicity"] = r.monotonicity.to_json();
            break;
        }
        case ModelKind::Alpha: {
            chain.alpha = model.config().alpha;
            chain.cardinality_k = model.config().cardinality_k;
            auto r = audit_submodular(batch_values_for(model, table), chain);
            reports["alpha_submodular"] = r.submodular.to_json();
            reports["monotonicity"] = r.monotonicity.to_json();
            break;
        }
        case ModelKind::NonMonotone: {
            const auto* psi = model.psi();
            const double hi = psi->config().x_max;
            auto concave = audit_concave(
                [&](double x) {
                    return psi->eval_nograd(model.params(), x);
                },
                0.0, hi, a.at("grid").get<int>(),
                a.at("concavity_tolerance").get<double>());
            reports["concavity"] = concave.to_json();
            chain.alpha = 1.0;
            chain.mono_tolerance = std::numeric_limits<double>::infinity();
            auto r = audit_submodular(batch_values_for(model, table), chain);
            reports["submodular"] = r.submodular.to_json();
            break;
        }
        default:
            throw std::invalid_argument(
                "no audit defined for this model kind");
    }
    write_json(reports, out + "/audit.json");
    std::cout << reports.dump(2) << '\n';
    bool pass = true;
    for (const auto& [name, r] : reports.items())
        pass = pass && r.at("pass").get<bool>();
    return pass ? kOk : kValidationError;
}

int run_report(const json& cfg) {
    const std::string out = cfg.at("out_dir").get<std::string>();
    fs::create_directories(out);
    std::ofstream csv(out + "/report.csv");
    csv << "run,planted,model_kind,metric,value\n";
    csv << std::setprecision(17);
    for (const auto& entry : cfg.at("runs")) {
        const std::string path = entry.get<std::string>();
        json r = read_json(path + "/report.json");
        const std::string planted =
            r.contains("planted") ? r["planted"].get<std::string>() : "";
        const std::string kind =
            r.contains("model_kind") ? r["model_kind"].get<std::string>() : "";
        if (r.contains("test_rmse"))
            csv << path << ',' << planted << ',' << kind << ",test_rmse,"
                << r["test_rmse"].get<double>() << '\n';
        if (r.contains("test_mjc"))
            csv << path << ',' << planted << ',' << kind << ",test_mjc,"
                << r["test_mjc"].get<double>() << '\n';
        if (r.contains("test_ndcg10"))
            csv << path << ',' << planted << ',' << kind << ",test_ndcg10,"
                << r["test_ndcg10"].get<double>() << '\n';
    }
    return kOk;
}

}  // namespace sublearn::cli
