#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <sgcn/dataset.hpp>
#include <sgcn/model.hpp>
#include <sgcn/training.hpp>

namespace {

using namespace sgcn;

// 0 = quiet, 1 = progress to stderr, 2 = extra detail
int log_level() {
    const char* v = std::getenv("SGCN_LOG");
    if (!v) return 1;
    std::string s(v);
    if (s == "quiet" || s == "0") return 0;
    if (s == "debug" || s == "2") return 2;
    return 1;
}

std::string num(double v) { return detail::fmt_g9(v); }

using KV = std::vector<std::pair<std::string, std::string>>;

void print_config(const std::string& command, const KV& kv) {
    std::cout << "config: command=" << command;
    for (const auto& [k, v] : kv) std::cout << ' ' << k << '=' << v;
    std::cout << '\n';
}

std::vector<int> parse_classes(const std::string& spec) {
    std::vector<int> out;
    std::vector<bool> seen(8, false);
    size_t pos = 0;
    while (pos < spec.size()) {
        size_t comma = spec.find(',', pos);
        std::string tok = spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
        pos = comma == std::string::npos ? spec.size() : comma + 1;
        int lo, hi;
        size_t dash = tok.find('-');
        try {
            if (dash == std::string::npos) {
                lo = hi = std::stoi(tok);
            } else {
                lo = std::stoi(tok.substr(0, dash));
                hi = std::stoi(tok.substr(dash + 1));
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("bad class token '" + tok + "' in --classes");
        }
        if (lo < 1 || hi > 7 || lo > hi)
            throw std::invalid_argument("class range " + tok + " outside 1..7");
        for (int c = lo; c <= hi; ++c)
            if (!seen[size_t(c)]) {
                seen[size_t(c)] = true;
                out.push_back(c);
            }
    }
    if (out.empty()) throw std::invalid_argument("--classes selects nothing");
    return out;
}

struct AblationFlags {
    bool baseline = false;
    bool no_map = false;
    bool weighted_adjacency = false;
    bool residual = false;
    bool no_temporal = false;
};

void add_ablation_flags(CLI::App* cmd, AblationFlags& f) {
    cmd->add_flag("--baseline", f.baseline, "single merged-relation encoder");
    cmd->add_flag("--no-map", f.no_map, "drop waypoints from the scene graphs");
    cmd->add_flag("--weighted-adjacency", f.weighted_adjacency,
                  "inverse-distance edge weights for proximity relations");
    cmd->add_flag("--residual", f.residual, "residual connections around the encoder blocks");
    cmd->add_flag("--no-temporal", f.no_temporal, "classify per-frame spatial encodings directly");
}

ModelConfig model_config_from(const AblationFlags& f, uint64_t seed) {
    ModelConfig mc;
    mc.baseline = f.baseline;
    mc.use_map = !f.no_map;
    mc.weighted_adjacency = f.weighted_adjacency;
    mc.residual = f.residual;
    mc.use_temporal = !f.no_temporal;
    mc.seed = seed;
    mc.validate();
    return mc;
}

KV ablation_kv(const AblationFlags& f) {
    return {{"baseline", f.baseline ? "1" : "0"},
            {"no-map", f.no_map ? "1" : "0"},
            {"weighted-adjacency", f.weighted_adjacency ? "1" : "0"},
            {"residual", f.residual ? "1" : "0"},
            {"no-temporal", f.no_temporal ? "1" : "0"}};
}

struct GenerateOpts {
    std::string classes = "1-7";
    int per_class = 10;
    int context = 0;
    uint64_t seed = 1;
    double noise_sigma = GeneratorKnobs{}.noise_sigma;
    std::string out;
};

int cmd_generate(const GenerateOpts& o) {
    print_config("generate", {{"classes", o.classes},
                              {"per-class", std::to_string(o.per_class)},
                              {"context", std::to_string(o.context)},
                              {"seed", std::to_string(o.seed)},
                              {"noise-sigma", num(o.noise_sigma)},
                              {"out", o.out}});
    GeneratorKnobs knobs;
    knobs.noise_sigma = o.noise_sigma;
    std::vector<Sequence> seqs;
    for (int c : parse_classes(o.classes))
        for (int j = 0; j < o.per_class; ++j)
            seqs.push_back(
                generate_synthetic(c, derive_seed(o.seed, (uint64_t(c) << 20) + uint64_t(j)), knobs));
    for (int j = 0; j < o.context; ++j)
        seqs.push_back(generate_context(derive_seed(o.seed, (uint64_t(8) << 20) + uint64_t(j)), knobs));
    write_jsonl(seqs, o.out);
    if (log_level() >= 1)
        std::cerr << "wrote " << seqs.size() << " sequences to " << o.out << "\n";
    return 0;
}

struct InOutOpts {
    std::string in, out;
    uint64_t seed = 1;
};

int cmd_resample(const InOutOpts& o) {
    print_config("resample", {{"in", o.in}, {"out", o.out}});
    std::vector<Sequence> seqs = read_jsonl(o.in);
    std::vector<Sequence> out;
    out.reserve(seqs.size());
    for (const Sequence& s : seqs) out.push_back(resample_to_4hz(s));
    write_jsonl(out, o.out);
    if (log_level() >= 1) std::cerr << "resampled " << out.size() << " sequences\n";
    return 0;
}

int cmd_extract(const InOutOpts& o) {
    print_config("extract",
                 {{"in", o.in}, {"seed", std::to_string(o.seed)}, {"out", o.out}});
    std::vector<Sequence> seqs = read_jsonl(o.in);
    std::vector<Sequence> cuts;
    for (size_t i = 0; i < seqs.size(); ++i) {
        std::vector<Sequence> c = extract_scenarios(seqs[i], derive_seed(o.seed, i));
        cuts.insert(cuts.end(), c.begin(), c.end());
    }
    write_jsonl(cuts, o.out);
    if (log_level() >= 1)
        std::cerr << "extracted " << cuts.size() << " scenario cuts from " << seqs.size()
                  << " sequences\n";
    return 0;
}

struct SplitOpts {
    std::string data, out;
    double ratio = 0.8;
    uint64_t seed = 1;
};

int cmd_split(const SplitOpts& o) {
    print_config("split", {{"data", o.data},
                           {"ratio", num(o.ratio)},
                           {"seed", std::to_string(o.seed)},
                           {"out", o.out}});
    std::vector<Sequence> seqs = read_jsonl(o.data);
    SplitResult sp = split_dataset(seqs, o.ratio, o.seed);
    for (const std::string& w : sp.warnings) std::cerr << "warning: " << w << "\n";
    write_manifest_json(build_manifest(seqs, sp), o.out);
    std::cout << "train=" << sp.train.size() << " val=" << sp.val.size() << "\n";
    return 0;
}

struct TrainOpts {
    std::string data, out, metrics;
    double split = 0.8;
    uint64_t seed = 7;
    AblationFlags flags;
    TrainConfig tc;
};

int cmd_train(const TrainOpts& o) {
    std::string metrics = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
    std::string decay;
    for (size_t i = 0; i < o.tc.decay_after_epochs.size(); ++i)
        decay += (i ? "," : "") + std::to_string(o.tc.decay_after_epochs[i]);
    KV kv = {{"data", o.data},         {"split", num(o.split)},
             {"seed", std::to_string(o.seed)}, {"epochs", std::to_string(o.tc.epochs)},
             {"lr0", num(o.tc.lr0)},   {"decay-factor", num(o.tc.decay_factor)},
             {"decay-after", decay}};
    KV ab = ablation_kv(o.flags);
    kv.insert(kv.end(), ab.begin(), ab.end());
    kv.push_back({"out", o.out});
    kv.push_back({"metrics", metrics});
    print_config("train", kv);

    std::vector<Sequence> seqs = read_jsonl(o.data);
    if (seqs.empty()) throw std::invalid_argument("no sequences in " + o.data);
    SplitResult sp = split_dataset(seqs, o.split, o.seed);
    for (const std::string& w : sp.warnings) std::cerr << "warning: " << w << "\n";

    ModelConfig mc = model_config_from(o.flags, o.seed);
    SceneGraphOptions opt = mc.scene_options();
    std::vector<SequenceBatch> train_b = batches_for(seqs, sp.train, opt);
    std::vector<SequenceBatch> val_b = batches_for(seqs, sp.val, opt);
    if (log_level() >= 2)
        std::cerr << "training on " << train_b.size() << " sequences, validating on "
                  << val_b.size() << "\n";

    TrainConfig tc = o.tc;
    tc.seed = o.seed;
    ModelParams params = init_params(o.seed, mc);
    TrainLog log = train(tc, params, train_b, val_b, log_level() >= 1 ? &std::cerr : nullptr);

    save_checkpoint(params, o.out);
    std::ofstream mf;
    detail::open_or_throw(mf, metrics);
    mf << log.to_csv();
    std::cout << "final_val_mean_pr_auc=" << num(log.epochs.back().val_mean_pr_auc) << "\n";
    std::cout << "checkpoint=" << o.out << "\nmetrics=" << metrics << "\n";
    return 0;
}

struct EvalOpts {
    std::string ckpt, data, out;
    bool edd = false;
};

int cmd_eval(const EvalOpts& o) {
    print_config("eval", {{"ckpt", o.ckpt},
                          {"data", o.data},
                          {"edd", o.edd ? "1" : "0"},
                          {"out", o.out}});
    ModelParams params = load_checkpoint(o.ckpt);
    const ModelConfig& mc = params.config;
    std::vector<Sequence> seqs = read_jsonl(o.data);
    if (seqs.empty()) throw std::invalid_argument("no sequences in " + o.data);

    std::vector<int> gt, pred;
    std::vector<double> prob_pool;
    EDDReport edd_total;
    for (const Sequence& s : seqs) {
        SequenceBatch b = sequence_to_batch(s, mc.scene_options());
        Prediction p = model_forward(params, b);
        gt.insert(gt.end(), b.labels.begin(), b.labels.end());
        pred.insert(pred.end(), p.labels.begin(), p.labels.end());
        const double* d = p.probabilities.data();
        prob_pool.insert(prob_pool.end(), d, d + size_t(b.t_len) * size_t(mc.n_classes));
        if (o.edd) edd_total += edd_decompose(b.labels, p.labels);
    }
    Tensor probs = Tensor::from({int(gt.size()), mc.n_classes}, std::move(prob_pool));
    MacroPRResult macro = mean_pr_auc(gt, probs);
    for (const std::string& w : macro.warnings) std::cerr << "warning: " << w << "\n";

    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    std::string acc_path = (fs::path(o.out) / "per_class_accuracy.csv").string();
    std::ofstream acc;
    detail::open_or_throw(acc, acc_path);
    acc << "class,name,accuracy\n";
    for (int c = 0; c < mc.n_classes; ++c) {
        std::optional<double> a = per_class_accuracy(gt, pred, c);
        acc << c << ',' << scenario_class_name(c) << ',' << (a ? num(*a) : "") << '\n';
    }
    std::string auc_path = (fs::path(o.out) / "pr_auc.csv").string();
    std::ofstream auc;
    detail::open_or_throw(auc, auc_path);
    auc << "class,name,auc\n";
    std::vector<PRCurve> curves;
    for (int c = 0; c < mc.n_classes; ++c)
        if (macro.per_class[size_t(c)]) {
            curves.push_back(*macro.per_class[size_t(c)]);
            auc << c << ',' << scenario_class_name(c) << ','
                << num(macro.per_class[size_t(c)]->auc) << '\n';
        }
    auc << "mean,," << num(macro.mean_auc) << '\n';
    write_pr_csv(curves, (fs::path(o.out) / "pr_curves.csv").string());
    write_pr_svg(curves, (fs::path(o.out) / "pr_curves.svg").string());

    size_t hit = 0;
    for (size_t i = 0; i < gt.size(); ++i) hit += gt[i] == pred[i];
    std::cout << "frames=" << gt.size() << "\n";
    std::cout << "frame_accuracy=" << num(double(hit) / double(gt.size())) << "\n";
    std::cout << "mean_pr_auc=" << num(macro.mean_auc) << "\n";
    if (o.edd) {
        write_edd_csv(edd_total, (fs::path(o.out) / "edd.csv").string());
        write_edd_svg(edd_total, (fs::path(o.out) / "edd.svg").string());
        std::cout << "edd_serious_fraction=" << num(edd_total.serious_fraction()) << "\n";
    }
    return 0;
}

struct PredictOpts {
    std::string ckpt, data, out;
};

int cmd_predict(const PredictOpts& o) {
    print_config("predict", {{"ckpt", o.ckpt}, {"data", o.data}, {"out", o.out}});
    ModelParams params = load_checkpoint(o.ckpt);
    std::vector<Sequence> seqs = read_jsonl(o.data);
    for (Sequence& s : seqs) {
        Sequence tmp = s;
        for (FrameObs& f : tmp.frames)
            if (f.label < 0) f.label = 0;
        SequenceBatch b = sequence_to_batch(tmp, params.config.scene_options());
        Prediction p = model_forward(params, b);
        for (size_t i = 0; i < s.frames.size(); ++i) s.frames[i].label = p.labels[i];
    }
    write_jsonl(seqs, o.out);
    if (log_level() >= 1) std::cerr << "predicted " << seqs.size() << " sequences\n";
    return 0;
}

struct EddReportOpts {
    std::string gt, pred, out;
};

int cmd_edd_report(const EddReportOpts& o) {
    print_config("edd-report", {{"gt", o.gt}, {"pred", o.pred}, {"out", o.out}});
    std::vector<Sequence> gt_seqs = read_jsonl(o.gt);
    std::vector<Sequence> pred_seqs = read_jsonl(o.pred);
    std::map<std::string, const Sequence*> by_id;
    for (const Sequence& s : pred_seqs) by_id[s.id] = &s;

    auto labels_of = [](const Sequence& s, const char* role) {
        std::vector<int> out;
        for (const FrameObs& f : s.frames) {
            if (f.label < 0)
                throw std::invalid_argument(std::string(role) + " sequence " + s.id +
                                            " has unlabeled frames");
            out.push_back(f.label);
        }
        return out;
    };

    EDDReport total;
    for (const Sequence& g : gt_seqs) {
        auto it = by_id.find(g.id);
        if (it == by_id.end())
            throw std::invalid_argument("prediction file has no sequence with id " + g.id);
        total += edd_decompose(labels_of(g, "ground-truth"), labels_of(*it->second, "predicted"));
    }
    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    write_edd_csv(total, (fs::path(o.out) / "edd.csv").string());
    write_edd_svg(total, (fs::path(o.out) / "edd.svg").string());
    std::cout << "frames=" << total.total() << "\n";
    std::cout << "edd_serious_fraction=" << num(total.serious_fraction()) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene-graph based traffic scenario classification"};
    app.require_subcommand(1);

    GenerateOpts gen;
    CLI::App* c_gen = app.add_subcommand("generate", "write a synthetic scenario dataset");
    c_gen->add_option("--classes", gen.classes, "scenario classes, e.g. 1-7 or 2,5");
    c_gen->add_option("--per-class", gen.per_class, "sequences per class")
        ->check(CLI::PositiveNumber);
    c_gen->add_option("--context", gen.context, "extra no-scenario sequences")
        ->check(CLI::NonNegativeNumber);
    c_gen->add_option("--seed", gen.seed, "base seed");
    c_gen->add_option("--noise-sigma", gen.noise_sigma, "position noise stddev, meters")
        ->check(CLI::NonNegativeNumber);
    c_gen->add_option("--out", gen.out, "output JSONL path")->required();

    InOutOpts rs;
    CLI::App* c_rs = app.add_subcommand("resample", "resample 2/10 Hz sequences to 4 Hz");
    c_rs->add_option("--in", rs.in, "input JSONL")->required()->check(CLI::ExistingFile);
    c_rs->add_option("--out", rs.out, "output JSONL")->required();

    InOutOpts ex;
    CLI::App* c_ex = app.add_subcommand("extract", "cut labeled sequences into scenario windows");
    c_ex->add_option("--in", ex.in, "input JSONL")->required()->check(CLI::ExistingFile);
    c_ex->add_option("--seed", ex.seed, "context draw seed");
    c_ex->add_option("--out", ex.out, "output JSONL")->required();

    SplitOpts so;
    CLI::App* c_sp = app.add_subcommand("split", "write a stratified train/val manifest");
    c_sp->add_option("--data", so.data, "input JSONL")->required()->check(CLI::ExistingFile);
    c_sp->add_option("--ratio", so.ratio, "train fraction");
    c_sp->add_option("--seed", so.seed, "shuffle seed");
    c_sp->add_option("--out", so.out, "manifest JSON path")->required();

    TrainOpts to;
    CLI::App* c_tr = app.add_subcommand("train", "train a classifier");
    c_tr->add_option("--data", to.data, "labeled JSONL")->required()->check(CLI::ExistingFile);
    c_tr->add_option("--split", to.split, "train fraction");
    c_tr->add_option("--seed", to.seed, "seed for split, init and shuffling");
    c_tr->add_option("--epochs", to.tc.epochs, "training epochs")->check(CLI::PositiveNumber);
    c_tr->add_option("--lr0", to.tc.lr0, "initial learning rate");
    c_tr->add_option("--decay-factor", to.tc.decay_factor, "learning rate decay factor");
    c_tr->add_option("--decay-after", to.tc.decay_after_epochs, "epochs after which to decay");
    c_tr->add_option("--out", to.out, "checkpoint path")->required();
    c_tr->add_option("--metrics", to.metrics, "metrics CSV path (default <out>.metrics.csv)");
    add_ablation_flags(c_tr, to.flags);

    EvalOpts eo;
    CLI::App* c_ev = app.add_subcommand("eval", "evaluate a checkpoint on a labeled dataset");
    c_ev->add_option("--ckpt", eo.ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--data", eo.data, "labeled JSONL")->required()->check(CLI::ExistingFile);
    c_ev->add_flag("--edd", eo.edd, "also write the frame-level error decomposition");
    c_ev->add_option("--out", eo.out, "report directory")->required();

    PredictOpts po;
    CLI::App* c_pr = app.add_subcommand("predict", "write per-frame label predictions");
    c_pr->add_option("--ckpt", po.ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
    c_pr->add_option("--data", po.data, "input JSONL")->required()->check(CLI::ExistingFile);
    c_pr->add_option("--out", po.out, "output JSONL with predicted labels")->required();

    EddReportOpts ro;
    CLI::App* c_rp = app.add_subcommand("edd-report", "error decomposition between two label files");
    c_rp->add_option("--gt", ro.gt, "ground-truth JSONL")->required()->check(CLI::ExistingFile);
    c_rp->add_option("--pred", ro.pred, "predicted JSONL")->required()->check(CLI::ExistingFile);
    c_rp->add_option("--out", ro.out, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (c_gen->parsed()) return cmd_generate(gen);
        if (c_rs->parsed()) return cmd_resample(rs);
        if (c_ex->parsed()) return cmd_extract(ex);
        if (c_sp->parsed()) return cmd_split(so);
        if (c_tr->parsed()) return cmd_train(to);
        if (c_ev->parsed()) return cmd_eval(eo);
        if (c_pr->parsed()) return cmd_predict(po);
        if (c_rp->parsed()) return cmd_edd_report(ro);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
