// SPDX-License-Identifier: Apache-2.0

#include "sonic/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sonic/benchgen.hpp"
#include "sonic/cache.hpp"
#include "sonic/config.hpp"
#include "sonic/errors.hpp"
#include "sonic/evalkit.hpp"
#include "sonic/gradcheck.hpp"
#include "sonic/mask.hpp"
#include "sonic/trainer.hpp"

namespace sonic {

namespace fs = std::filesystem;

namespace {

constexpr const char* kUsage =
    "usage: sonic_lab <command> [options]\n"
    "\n"
    "commands:\n"
    "  train      train the Nexus parameters on a transcript set\n"
    "  eval       greedy-decode a benchmark under a cache policy and score it\n"
    "  genbench   generate coreres, gsm8kvar or train5 samples\n"
    "  maskdump   print the visibility mask of one conversation\n"
    "  simulate   replay KV-cache residency and report the accounting\n"
    "  gradcheck  compare analytic gradients with finite differences\n"
    "\n"
    "run 'sonic_lab <command> --help' for the options of a command\n";

void write_json(const std::string& path, const nlohmann::json& j, std::ostream& fallback) {
    if (path.empty() || path == "-") {
        fallback << j.dump(2) << "\n";
        return;
    }
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << "\n";
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not an integer list: '" + text + "'");
        }
    }
    return out;
}

std::vector<ChatTranscript> read_transcripts(const std::string& path) {
    std::vector<ChatTranscript> out;
    for (const auto& row : read_jsonl(path)) out.push_back(transcript_from_json(row));
    return out;
}

struct Common {
    std::string config;
    std::string vocab;
};

GlobalConfig resolve_config(const Common& c) {
    GlobalConfig g = c.config.empty() ? GlobalConfig{} : load_global_config(c.config);
    if (!c.vocab.empty()) g.paths.vocab = c.vocab;
    g.validate();
    return g;
}

// ---- train ----

struct TrainArgs {
    Common common;
    std::string data, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    GlobalConfig cfg = resolve_config(a.common);
    if (a.seed) cfg.seed = *a.seed;
    if (a.steps) cfg.train.steps = *a.steps;
    if (!a.data.empty()) cfg.paths.data = a.data;
    if (!a.out.empty()) cfg.paths.out = a.out;
    cfg.validate();
    if (cfg.paths.data.empty()) throw UsageError("train: no data path (use --data or paths.data)");

    const Vocabulary vocab = load_vocabulary(cfg.paths);
    std::vector<SegmentedConversation> convs;
    for (const auto& t : read_transcripts(cfg.paths.data)) convs.push_back(segment(t, vocab));

    const fs::path dir = cfg.paths.out;
    fs::create_directories(dir);
    vocab.save(dir / "vocab.txt");
    write_json((dir / "config.json").string(), to_json(cfg), out);

    const TrainConfig tc = cfg.effective_train();
    ModelParams params = init_model(cfg.effective_model(), cfg.nexus, vocab);
    const auto items = prepare_items(params, convs);
    std::ofstream log(dir / "log.jsonl");
    if (!log) throw IoError("cannot write " + (dir / "log.jsonl").string());
    auto on_step = [&](const StepReport& r, const TrainState& s) {
        log << to_json(r).dump() << "\n";
        if (tc.checkpoint_every > 0 && s.step % tc.checkpoint_every == 0) {
            save_checkpoint(dir / ("checkpoint-" + std::to_string(s.step) + ".json"), s.params, cfg.nexus,
                            vocab.fingerprint());
        }
    };
    auto run = train(std::move(params), items, tc, on_step);
    save_checkpoint(dir / "checkpoint.json", run.state.params, cfg.nexus, vocab.fingerprint());
    out << "trained " << tc.steps << " steps on " << convs.size() << " conversations; final L_total "
        << run.log.back().loss.total << "; checkpoint " << (dir / "checkpoint.json").string() << "\n";
    return 0;
}

// ---- eval ----

struct PolicyArgs {
    std::string policy = "sonic";
    std::optional<int> budget;
    std::optional<double> ratio;
    int sink = 4;
    int window = 100;
    int keep = 256;

    EvictionPolicy build() const {
        EvictionPolicy p;
        p.kind = parse_policy(policy);
        p.sink = sink;
        p.window = window;
        p.keep = keep;
        p.validate();
        return p;
    }
};

void add_policy_options(CLI::App* app, PolicyArgs& p) {
    app->add_option("--policy", p.policy, "full, sonic, sink_window, accum_attention (alias h2o_like)");
    app->add_option("--budget", p.budget, "Nexus tokens per segment");
    app->add_option("--ratio", p.ratio, "target history compression ratio in [0, 1]");
    app->add_option("--sink", p.sink, "sink_window: leading history positions kept");
    app->add_option("--window", p.window, "sink_window: most recent history positions kept");
    app->add_option("--keep", p.keep, "accum_attention: history positions kept");
}

struct EvalArgs {
    Common common;
    std::string ckpt, data, report;
    PolicyArgs policy;
    int max_new_tokens = 32;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    GlobalConfig cfg = resolve_config(a.common);
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    const Vocabulary vocab = load_vocabulary(cfg.paths);
    std::vector<BenchmarkSample> samples;
    for (const auto& row : read_jsonl(a.data)) samples.push_back(benchmark_sample_from_json(row));
    EvalConfig ec;
    ec.policy = a.policy.build();
    ec.budget = a.policy.budget;
    ec.ratio = a.policy.ratio;
    ec.max_new_tokens = a.max_new_tokens;
    const auto report = run_eval(ckpt, vocab, samples, ec);
    if (!a.report.empty()) write_json(a.report, to_json(report), out);
    out << "accuracy ";
    if (report.accuracy) {
        out << *report.accuracy;
    } else {
        out << "null";
    }
    out << " (" << report.correct << "/" << report.samples.size() << ")\n";
    return 0;
}

// ---- genbench ----

struct GenArgs {
    std::string task, out;
    std::optional<int> n;
    std::uint64_t seed = 0;
    std::vector<int> distractions;
    std::vector<int> padding;
};

int cmd_genbench(const GenArgs& a, std::ostream& out) {
    GenSpec spec;
    if (a.task == "coreres") {
        spec = coreres_default_spec();
    } else if (a.task == "gsm8kvar") {
        spec = gsm8k_variant_default_spec();
    } else if (a.task == "train5") {
        spec = training_default_spec();
    } else {
        throw UsageError("genbench: unknown task '" + a.task + "'");
    }
    spec.seed = a.seed;
    if (a.n) spec.count = *a.n;
    if (!a.distractions.empty()) spec.distractions = {a.distractions.front(), a.distractions.back()};
    if (!a.padding.empty()) spec.padding = {a.padding.front(), a.padding.back()};
    std::vector<BenchmarkSample> samples;
    if (a.task == "coreres") {
        samples = gen_coreres(spec);
    } else if (a.task == "gsm8kvar") {
        samples = gen_gsm8k_variant(spec);
    } else {
        samples = gen_training_set(spec);
    }
    std::vector<nlohmann::json> rows;
    for (const auto& s : samples) rows.push_back(to_json(s));
    if (a.out.empty() || a.out == "-") {
        for (const auto& r : rows) out << r.dump() << "\n";
    } else {
        write_jsonl(a.out, rows);
    }
    return 0;
}

// ---- maskdump ----

struct MaskArgs {
    Common common;
    std::string data, transcript, out, k_set, mode = "training";
    std::size_t index = 0;
    std::optional<int> budget;
};

int cmd_maskdump(const MaskArgs& a, std::ostream& out) {
    GlobalConfig cfg = resolve_config(a.common);
    NexusConfig nexus = cfg.nexus;
    if (!a.k_set.empty()) {
        nexus.k_set = parse_int_list(a.k_set);
        nexus.k_default = nexus.k_set.front();
        nexus.validate();
    }
    ChatTranscript t;
    if (!a.transcript.empty()) {
        try {
            t = transcript_from_json(nlohmann::json::parse(a.transcript));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("maskdump: --transcript is not JSON: ") + e.what());
        }
    } else if (!a.data.empty()) {
        const auto all = read_transcripts(a.data);
        if (a.index >= all.size()) throw IndexError("maskdump: --index beyond the data file");
        t = all[a.index];
    } else {
        throw UsageError("maskdump: give --data or --transcript");
    }
    MaskMode mode;
    if (a.mode == "training") {
        mode = MaskMode::Training;
    } else if (a.mode == "inference") {
        mode = MaskMode::Inference;
    } else {
        throw UsageError("maskdump: --mode must be training or inference");
    }
    const Vocabulary vocab = load_vocabulary(cfg.paths);
    const auto seq = insert_nexus(segment(t, vocab), a.budget.value_or(nexus.k_default), nexus);
    const auto mask = build_mask(seq, mode);
    if (a.out.empty() || a.out == "-") {
        dump_mask(seq, mask, out);
    } else {
        std::ofstream f(a.out);
        if (!f) throw IoError("cannot write " + a.out);
        dump_mask(seq, mask, f);
    }
    return 0;
}

// ---- simulate ----

struct SimArgs {
    Common common;
    std::string data, report, ckpt;
    PolicyArgs policy;
};

int cmd_simulate(const SimArgs& a, std::ostream& out) {
    GlobalConfig cfg = resolve_config(a.common);
    SimRequest req;
    req.policy = a.policy.build();
    req.budget = a.policy.budget;
    req.ratio = a.policy.ratio;
    req.nexus = cfg.nexus;
    if (req.policy.kind == PolicyKind::Sonic && !req.budget && !req.ratio) req.budget = cfg.nexus.k_default;
    if (req.policy.kind != PolicyKind::Sonic) req.budget.reset();

    std::optional<Checkpoint> ckpt;
    if (!a.ckpt.empty()) ckpt = load_checkpoint(a.ckpt);
    const ModelConfig model = ckpt ? ckpt->params.config : cfg.effective_model();
    req.cost = cost_model_for(model);

    std::vector<SegmentedConversation> convs;
    std::optional<Vocabulary> vocab;
    if (a.data.empty()) {
        // 30 turns: sys 50, 60 segments of 50 tokens, query 50.
        convs.push_back(uniform_conversation(50, 60, 50, 50));
    } else {
        vocab = load_vocabulary(cfg.paths);
        for (const auto& t : read_transcripts(a.data)) convs.push_back(segment(t, *vocab));
    }

    nlohmann::json rows = nlohmann::json::array();
    double attended = 0.0, ratio = 0.0;
    std::size_t peak_bytes = 0;
    for (const auto& conv : convs) {
        std::optional<Matrix> attention;
        if (needs_attention(req)) {
            if (ckpt) {
                attention = teacher_forward(ckpt->params, conv).mean_attention();
            } else {
                // No checkpoint: a seeded model sized to the conversation scores the tokens.
                ModelConfig mc = model;
                mc.context = std::max<int>(mc.context, static_cast<int>(conv.tokens.size()));
                const Vocabulary v = vocab ? *vocab : load_vocabulary(cfg.paths);
                attention = teacher_forward(init_model(mc, cfg.nexus, v), conv).mean_attention();
            }
        }
        const auto r = simulate(conv, req, attention ? &*attention : nullptr);
        rows.push_back(to_json(r.report));
        attended += static_cast<double>(r.report.attended_at_decode);
        ratio += r.report.compression_ratio;
        peak_bytes = std::max(peak_bytes, r.report.peak_bytes);
    }
    const double n = static_cast<double>(convs.size());
    nlohmann::json summary{{"conversations", convs.size()},
                           {"mean_attended_at_decode", attended / n},
                           {"mean_compression_ratio", ratio / n},
                           {"max_peak_bytes", peak_bytes}};
    const nlohmann::json report{{"policy", policy_name(req.policy.kind)}, {"summary", summary}, {"conversations", rows}};
    if (!a.report.empty()) write_json(a.report, report, out);
    out << policy_name(req.policy.kind) << ": mean attended at decode " << attended / n << ", mean compression ratio "
        << ratio / n << "\n";
    return 0;
}

// ---- gradcheck ----

struct GradArgs {
    std::uint64_t seed = 7;
    std::string report;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
    GradcheckConfig gc;
    gc.seed = a.seed;
    const auto report = run_gradcheck(gc);
    for (const auto& c : report.components) {
        out << c.name << ": " << (c.failures == 0 ? "ok" : "FAIL") << " coordinates=" << c.coordinates
            << " failures=" << c.failures << " max_rel_error=" << c.max_rel_error << "\n";
    }
    if (!a.report.empty()) write_json(a.report, to_json(report), out);
    return report.passed ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    if (argc < 2) {
        err << kUsage;
        return 2;
    }
    CLI::App app{"SONIC KV-cache compression lab", "sonic_lab"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the Nexus parameters");
    train_cmd->add_option("--config", train_args.common.config, "JSON config file");
    train_cmd->add_option("--vocab", train_args.common.vocab, "vocabulary file");
    train_cmd->add_option("--data", train_args.data, "transcript JSONL");
    train_cmd->add_option("--out", train_args.out, "output directory");
    train_cmd->add_option("--seed", train_args.seed, "master seed");
    train_cmd->add_option("--steps", train_args.steps, "override train.steps");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score a benchmark under a cache policy");
    eval_cmd->add_option("--config", eval_args.common.config, "JSON config file");
    eval_cmd->add_option("--vocab", eval_args.common.vocab, "vocabulary file");
    eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
    eval_cmd->add_option("--data", eval_args.data, "benchmark JSONL")->required();
    eval_cmd->add_option("--report", eval_args.report, "JSON report path");
    eval_cmd->add_option("--max-new-tokens", eval_args.max_new_tokens, "decode length cap");
    add_policy_options(eval_cmd, eval_args.policy);

    GenArgs gen_args;
    auto* gen_cmd = app.add_subcommand("genbench", "generate benchmark samples");
    gen_cmd->add_option("--task", gen_args.task, "coreres, gsm8kvar or train5")->required();
    gen_cmd->add_option("--n", gen_args.n, "sample count");
    gen_cmd->add_option("--seed", gen_args.seed, "generator seed");
    gen_cmd->add_option("--out", gen_args.out, "JSONL output path (stdout when absent)");
    gen_cmd->add_option("--distractions", gen_args.distractions, "distraction turn range: lo hi")->expected(2);
    gen_cmd->add_option("--padding", gen_args.padding, "extra sentences per distraction message: lo hi")->expected(2);

    MaskArgs mask_args;
    auto* mask_cmd = app.add_subcommand("maskdump", "print a visibility mask");
    mask_cmd->add_option("--config", mask_args.common.config, "JSON config file");
    mask_cmd->add_option("--vocab", mask_args.common.vocab, "vocabulary file");
    mask_cmd->add_option("--data", mask_args.data, "transcript JSONL");
    mask_cmd->add_option("--index", mask_args.index, "line of --data to use");
    mask_cmd->add_option("--transcript", mask_args.transcript, "inline transcript JSON");
    mask_cmd->add_option("--budget", mask_args.budget, "Nexus tokens per segment");
    mask_cmd->add_option("--k-set", mask_args.k_set, "comma-separated budget set override");
    mask_cmd->add_option("--mode", mask_args.mode, "training or inference");
    mask_cmd->add_option("--out", mask_args.out, "output path (stdout when absent)");

    SimArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "replay cache residency");
    sim_cmd->add_option("--config", sim_args.common.config, "JSON config file");
    sim_cmd->add_option("--vocab", sim_args.common.vocab, "vocabulary file");
    sim_cmd->add_option("--data", sim_args.data, "transcript JSONL (built-in 30-turn fixture when absent)");
    sim_cmd->add_option("--report", sim_args.report, "JSON report path");
    sim_cmd->add_option("--ckpt", sim_args.ckpt, "checkpoint providing attention for accum_attention");
    add_policy_options(sim_cmd, sim_args.policy);

    GradArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    grad_cmd->add_option("--seed", grad_args.seed, "fixture and model seed");
    grad_cmd->add_option("--report", grad_args.report, "JSON report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        // Subcommand help arrives as a parse error carrying exit code 0.
        if (e.get_exit_code() == 0) {
            for (auto* sub : app.get_subcommands()) out << sub->help();
            return 0;
        }
        err << "error: usage_error: " << msg << "\n";
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_args, out);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
        if (gen_cmd->parsed()) return cmd_genbench(gen_args, out);
        if (mask_cmd->parsed()) return cmd_maskdump(mask_args, out);
        if (sim_cmd->parsed()) return cmd_simulate(sim_args, out);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_args, out);
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << e.what() << "\n";
        return e.kind() == "usage_error" ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: internal_error: " << e.what() << "\n";
        return 1;
    }
    err << kUsage;
    return 2;
}

}  // namespace sonic
