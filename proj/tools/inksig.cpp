// inksig: command-line front end for ingest, stats, render, train, eval and
// sweep. Every command writes a JSON run ledger next to its output; wall-clock
// timings go to a separate file so the ledger itself is reproducible.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <inksig/dataset.hpp>
#include <inksig/eval.hpp>
#include <inksig/model_io.hpp>
#include <inksig/train.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace inksig;

namespace {

/// Error tied to one flag; printed as "<flag>: <message>".
struct FlagError : std::runtime_error {
    FlagError(const std::string& flag, const std::string& msg) : std::runtime_error(flag + ": " + msg) {}
};

using Clock = std::chrono::steady_clock;

class Timer {
public:
    void mark(const std::string& name) {
        const auto now = Clock::now();
        entries_[name] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }
    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : entries_) j[k] = v;
        j["total_seconds"] = std::chrono::duration<double>(Clock::now() - start_).count();
        return j;
    }

private:
    Clock::time_point start_ = Clock::now();
    Clock::time_point last_ = start_;
    std::map<std::string, double> entries_;
};

struct Ledger {
    json body = json::object();
    Timer timer;

    /// Writes `<base>ledger.json` and `<base>timings.json`.
    void write(const std::string& base) const {
        write_text(base + "ledger.json", body.dump(2) + "\n");
        write_text(base + "timings.json", timer.to_json().dump(2) + "\n");
    }

    static void write_text(const std::string& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << text;
    }
};

/// Every option of a subcommand with its effective value (command line,
/// config file or default), in declaration order.
json echo_config(const CLI::App& sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_name(false, true);
        if (name == "--help" || name.empty()) continue;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            if (opt->get_type_size() == 0 && opt->get_expected_min() == 0) {
                j[name] = true;
            } else {
                std::string joined;
                for (std::size_t i = 0; i < r.size(); ++i) joined += (i ? "," : "") + r[i];
                j[name] = joined;
            }
        } else {
            const std::string def = opt->get_default_str();
            if (def.empty()) j[name] = nullptr;
            else j[name] = def;
        }
    }
    return j;
}

std::vector<int> parse_int_list(const std::string& flag, const std::string& text, int min_value) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size() || v < min_value) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw FlagError(flag, "'" + tok + "' is not an integer >= " + std::to_string(min_value));
        }
    }
    if (out.empty()) throw FlagError(flag, "empty list");
    return out;
}

int parse_window(const std::string& text) {
    if (text == "inf") return kPrefixWindow;
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used == text.size() && v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw FlagError("--window", "expected a positive integer or 'inf', got '" + text + "'");
}

std::string window_name(int window) { return window == kPrefixWindow ? "inf" : std::to_string(window); }

Corpus load_jsonl(const std::string& path, const std::string& flag = "--in") {
    std::ifstream in(path);
    if (!in) throw FlagError(flag, "cannot open '" + path + "'");
    try {
        return parse_jsonl(in);
    } catch (const ParseError& e) {
        throw FlagError(flag, path + ": " + e.what());
    }
}

void check_level(int level) {
    if (level < 0 || level > kMaxSignatureLevel)
        throw FlagError("--level", "must be in [0, " + std::to_string(kMaxSignatureLevel) + "]");
}

std::vector<std::string> read_writer_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FlagError("--writers-file", "cannot open '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    if (out.empty()) throw FlagError("--writers-file", "'" + path + "' lists no writers");
    return out;
}

void write_writer_table(const std::string& path, const std::vector<std::string>& writers) {
    std::ofstream out(path);
    if (!out) throw FlagError("--writers-file", "cannot write '" + path + "'");
    for (const auto& w : writers) out << w << '\n';
}

json epoch_json(const EpochRecord& r) {
    json j;
    j["epoch"] = r.epoch;
    j["learning_rate"] = r.learning_rate;
    j["train_loss"] = r.train_loss;
    j["train_top1_error"] = r.train_top1_error;
    if (std::isnan(r.heldout_top1_error)) j["heldout_top1_error"] = nullptr;
    else j["heldout_top1_error"] = r.heldout_top1_error;
    return j;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Training shared by train and sweep

struct TrainArgs {
    std::string in;
    int level = 3;
    std::string window = "2";
    std::optional<int> split_classes;
    std::string writers_file;
    int epochs = 10;
    std::optional<std::uint64_t> seed;
    std::string dropstroke = "on";
    std::string drop_mode = "uniform-m";
    double max_drop_fraction = 0.5;
    std::string arch = std::string(kDefaultArchitecture);
    double lr = 0.01;
    double lr_decay = 0.7;
    std::string schedule = "plateau";
    int minibatch = 100;
    int quota = 0;
    bool no_distort = false;
    std::string out;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--in", a.in, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
    sub->add_option("--level", a.level, "Signature truncation level N (0-6)")->capture_default_str();
    sub->add_option("--window", a.window, "Signature window half-width D, or 'inf'")->capture_default_str();
    sub->add_option("--split-classes", a.split_classes, "Number of character classes used for training");
    sub->add_option("--epochs", a.epochs, "Training epochs")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", a.seed, "Master seed")->required();
    sub->add_option("--drop-mode", a.drop_mode, "DropStroke sampling: uniform-m, uniform-variant or enumerate")
        ->capture_default_str()
        ->check(CLI::IsMember({"uniform-m", "uniform-variant", "enumerate"}));
    sub->add_option("--max-drop-fraction", a.max_drop_fraction, "Largest fraction of strokes dropped")
        ->capture_default_str();
    sub->add_option("--arch", a.arch, "Hidden-layer architecture string")->capture_default_str();
    sub->add_option("--lr", a.lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--lr-decay", a.lr_decay, "Learning-rate decay factor")->capture_default_str();
    sub->add_option("--lr-schedule", a.schedule, "plateau, every-epoch or constant")
        ->capture_default_str()
        ->check(CLI::IsMember({"plateau", "every-epoch", "constant"}));
    sub->add_option("--minibatch", a.minibatch, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--quota", a.quota, "Samples per writer per epoch (0: largest prototype count)")
        ->capture_default_str();
    sub->add_flag("--no-distort", a.no_distort, "Disable random affine distortion");
}

DropPolicy drop_policy(const TrainArgs& a, bool enabled, std::uint64_t seed) {
    if (!enabled) {
        DropPolicy p = DropPolicy::none();
        p.seed = seed;
        return p;
    }
    DropPolicy p;
    p.mode = a.drop_mode == "enumerate"         ? DropMode::enumerate
             : a.drop_mode == "uniform-variant" ? DropMode::sample_uniform_variant
                                                : DropMode::sample_uniform_m;
    if (!(a.max_drop_fraction >= 0.0 && a.max_drop_fraction < 1.0))
        throw FlagError("--max-drop-fraction", "must be in [0, 1)");
    p.max_drop_fraction = a.max_drop_fraction;
    p.seed = seed;
    return p;
}

struct TrainOutcome {
    Network<float> net;
    TrainLog log;
    std::vector<std::string> writers;
    std::size_t train_characters = 0;
    std::size_t heldout_characters = 0;
    std::vector<std::string> warnings;
};

TrainOutcome run_training(const Corpus& corpus, const TrainArgs& a, int level, bool dropstroke,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
    check_level(level);
    const int window = parse_window(a.window);
    const std::uint64_t seed = *a.seed;

    Corpus train_side = corpus;
    Corpus test_side;
    std::vector<std::string> warnings;
    if (a.split_classes) {
        if (*a.split_classes < 1) throw FlagError("--split-classes", "must be >= 1");
        try {
            auto split = make_split(corpus, random_class_split(corpus, static_cast<std::size_t>(*a.split_classes), seed));
            train_side = std::move(split.train);
            test_side = std::move(split.test);
            warnings = std::move(split.warnings);
        } catch (const ConfigError& e) {
            throw FlagError("--split-classes", e.what());
        }
    }
    const auto writers = train_side.writers();
    if (writers.empty()) throw FlagError("--in", "no training characters");

    auto by_writer = train_side.group_by(writers);
    int quota = a.quota;
    if (quota < 0) throw FlagError("--quota", "must be >= 0");
    if (quota == 0)
        for (const auto& v : by_writer) quota = std::max(quota, static_cast<int>(v.size()));

    std::vector<LabeledCharacter> heldout;
    const auto test_by_writer = test_side.group_by(writers);
    for (std::size_t w = 0; w < test_by_writer.size(); ++w)
        for (const auto& c : test_by_writer[w]) heldout.push_back({c, static_cast<int>(w)});

    NetworkSpec spec;
    try {
        spec = parse_architecture(a.arch, static_cast<int>(sig_dim(level)), static_cast<int>(writers.size()));
    } catch (const InvalidInput& e) {
        throw FlagError("--arch", e.what());
    }
    Network<float> net(spec, derive_seed(seed, 2));
    BalancedTrainingStream stream(std::move(by_writer), quota, drop_policy(a, dropstroke, derive_seed(seed, 1)));

    TrainConfig cfg;
    cfg.minibatch = a.minibatch;
    cfg.learning_rate = a.lr;
    cfg.lr_decay = a.lr_decay;
    cfg.schedule = a.schedule == "constant"      ? LrSchedule::constant
                   : a.schedule == "every-epoch" ? LrSchedule::every_epoch
                                                 : LrSchedule::plateau;
    cfg.epochs = a.epochs;
    cfg.seed = derive_seed(seed, 3);
    cfg.distort = !a.no_distort;
    cfg.render = {level, window};
    auto log = train(net, stream, cfg, heldout, on_epoch);
    return {std::move(net), std::move(log), writers, train_side.characters.size(), heldout.size(), std::move(warnings)};
}

std::string default_writers_file(const std::string& model) { return model + ".writers"; }

// ---------------------------------------------------------------------------
// Commands

struct IngestArgs {
    std::string format = "jsonl";
    std::vector<std::string> in;
    std::string out;
    bool swap_tag_bytes = false;
};

void cmd_ingest(const IngestArgs& a, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "ingest";
    ledger.body["config"] = echo_config(sub);
    std::vector<InkCharacter> all;
    json sources = json::array();
    for (const auto& path : a.in) {
        Corpus c;
        if (a.format == "pot") {
            std::vector<std::uint8_t> bytes;
            try {
                bytes = detail::read_file(path);
            } catch (const std::exception& e) {
                throw FlagError("--in", e.what());
            }
            try {
                c = parse_pot(bytes, fs::path(path).stem().string(), {a.swap_tag_bytes});
            } catch (const ParseError& e) {
                throw FlagError("--in", path + ": " + e.what());
            }
        } else {
            c = load_jsonl(path);
        }
        sources.push_back({{"path", path}, {"characters", c.characters.size()}});
        all.insert(all.end(), c.characters.begin(), c.characters.end());
    }
    ledger.timer.mark("read_seconds");
    std::ofstream out(a.out);
    if (!out) throw FlagError("--out", "cannot write '" + a.out + "'");
    write_jsonl(out, all);
    out.close();
    Corpus merged{all, a.format};
    ledger.body["sources"] = sources;
    ledger.body["characters"] = all.size();
    ledger.body["writers"] = merged.writers().size();
    ledger.body["classes"] = merged.char_labels().size();
    ledger.body["artifacts"] = json::array({a.out});
    ledger.write(a.out + ".");
    std::cout << "wrote " << all.size() << " characters to " << a.out << "\n";
}

struct StatsArgs {
    std::string in;
    bool dropstroke = false;
    std::string out;
};

void cmd_stats(const StatsArgs& a, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "stats";
    ledger.body["config"] = echo_config(sub);
    const auto corpus = load_jsonl(a.in);
    const auto st = stroke_stats(corpus.characters, a.dropstroke);
    std::ofstream out(a.out);
    if (!out) throw FlagError("--out", "cannot write '" + a.out + "'");
    out << "strokes,count\n";
    json hist = json::object();
    for (const auto& [n, count] : st.histogram) {
        out << n << ',' << count << '\n';
        hist[std::to_string(n)] = count;
    }
    out.close();
    ledger.body["prototypes"] = corpus.characters.size();
    ledger.body["histogram"] = hist;
    ledger.body["total"] = st.total;
    ledger.body["artifacts"] = json::array({a.out});
    ledger.write(a.out + ".");
    std::cout << "total " << st.total << "\n";
}

struct RenderArgs {
    std::string in;
    int level = 3;
    std::string window = "2";
    bool equalize = false;
    std::string out;
    int limit = 0;
};

std::string safe_name(const std::string& s) {
    std::string out;
    for (unsigned char c : s) out += std::isalnum(c) || c == '-' || c == '_' ? static_cast<char>(c) : '_';
    return out;
}

void cmd_render(const RenderArgs& a, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "render";
    ledger.body["config"] = echo_config(sub);
    check_level(a.level);
    const int window = parse_window(a.window);
    const auto corpus = load_jsonl(a.in);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw FlagError("--out", "cannot create '" + a.out + "': " + ec.message());
    std::size_t count = corpus.characters.size();
    if (a.limit > 0) count = std::min(count, static_cast<std::size_t>(a.limit));
    json files = json::array();
    for (std::size_t i = 0; i < count; ++i) {
        const auto& ch = corpus.characters[i];
        char idx[32];
        std::snprintf(idx, sizeof idx, "%06zu", i);
        const std::string stem = std::string(idx) + "_" + safe_name(ch.writer_id) + "_" + safe_name(ch.char_label);
        const auto t = render(normalize(ch), {a.level, window});
        for (const auto& p : export_images(t, a.out, stem, a.equalize)) files.push_back(p.filename().string());
    }
    ledger.body["characters"] = count;
    ledger.body["channels"] = sig_dim(a.level);
    ledger.body["artifacts"] = files;
    ledger.write((fs::path(a.out) / "").string());
    std::cout << "wrote " << files.size() << " images to " << a.out << "\n";
}

void cmd_train(TrainArgs a, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "train";
    ledger.body["config"] = echo_config(sub);
    const auto corpus = load_jsonl(a.in);
    ledger.timer.mark("load_seconds");
    json epochs = json::array();
    auto outcome = run_training(corpus, a, a.level, a.dropstroke == "on", [&](const EpochRecord& r) {
        epochs.push_back(epoch_json(r));
        std::cout << "epoch " << r.epoch << " lr " << r.learning_rate << " loss " << r.train_loss << " train_err "
                  << r.train_top1_error << " heldout_err " << r.heldout_top1_error << std::endl;
    });
    ledger.timer.mark("train_seconds");
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    try {
        save_model(outcome.net, a.out);
    } catch (const std::exception& e) {
        throw FlagError("--out", e.what());
    }
    const std::string writers_file = a.writers_file.empty() ? default_writers_file(a.out) : a.writers_file;
    write_writer_table(writers_file, outcome.writers);

    ledger.body["writers"] = outcome.writers;
    ledger.body["train_characters"] = outcome.train_characters;
    ledger.body["heldout_characters"] = outcome.heldout_characters;
    ledger.body["parameters"] = outcome.net.parameter_count();
    ledger.body["warnings"] = outcome.warnings;
    ledger.body["epochs"] = epochs;
    if (!outcome.log.epochs.empty() && outcome.heldout_characters > 0)
        ledger.body["final_heldout_top1_accuracy"] = 1.0 - outcome.log.epochs.back().heldout_top1_error;
    ledger.body["artifacts"] = json::array({a.out, writers_file});
    ledger.write(a.out + ".");
}

struct EvalArgs {
    std::string model;
    std::string in;
    std::string writers_file;
    int tests_per_char = 1;
    std::string group_sizes = "1,2,3,4,5,6,10,15,20";
    std::string topk = "1,5,10,15,20";
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> split_classes;
    std::optional<std::uint64_t> split_seed;
    std::string window = "2";
    std::string combine = "mean";
    std::string drop_mode = "uniform-m";
    double max_drop_fraction = 0.5;
};

json rank_json(const RankTable& t) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.ks.size(); ++i) rows.push_back({{"k", t.ks[i]}, {"accuracy", t.accuracy[i]}});
    return rows;
}

void cmd_eval(const EvalArgs& a, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "eval";
    ledger.body["config"] = echo_config(sub);
    if (a.tests_per_char < 1) throw FlagError("--tests-per-char", "must be >= 1");
    const auto groups = parse_int_list("--group-sizes", a.group_sizes, 1);
    const auto ks = parse_int_list("--topk", a.topk, 1);
    const int window = parse_window(a.window);

    Network<float> net = [&] {
        try {
            return load_model<float>(a.model);
        } catch (const std::exception& e) {
            throw FlagError("--model", e.what());
        }
    }();
    int level = -1;
    for (int n = 0; n <= kMaxSignatureLevel; ++n)
        if (static_cast<int>(sig_dim(n)) == net.input_channels()) level = n;
    if (level < 0)
        throw FlagError("--model", std::to_string(net.input_channels()) + " input channels match no signature level");

    const auto writers = read_writer_table(a.writers_file.empty() ? default_writers_file(a.model) : a.writers_file);
    if (static_cast<int>(writers.size()) != net.num_writers())
        throw FlagError("--writers-file", std::to_string(writers.size()) + " writers listed, model has " +
                                              std::to_string(net.num_writers()) + " outputs");

    Corpus test_side = load_jsonl(a.in);
    if (a.split_classes) {
        try {
            test_side = make_split(test_side, random_class_split(test_side, static_cast<std::size_t>(*a.split_classes),
                                                                 a.split_seed.value_or(*a.seed)))
                            .test;
        } catch (const ConfigError& e) {
            throw FlagError("--split-classes", e.what());
        }
    }
    const auto by_writer = test_side.group_by(writers);
    std::size_t n_test = 0;
    for (const auto& v : by_writer) n_test += v.size();
    if (n_test == 0) throw FlagError("--in", "no test characters belong to an enrolled writer");
    ledger.timer.mark("load_seconds");

    EvalConfig cfg;
    cfg.tests_per_char = a.tests_per_char;
    cfg.topk = ks;
    cfg.group_sizes = groups;
    cfg.seed = *a.seed;
    TrainArgs drop_args;
    drop_args.drop_mode = a.drop_mode;
    drop_args.max_drop_fraction = a.max_drop_fraction;
    cfg.policy = drop_policy(drop_args, true, 0);
    cfg.combine = a.combine == "log-sum" ? CombineRule::log_sum : CombineRule::mean;
    cfg.render = {level, window};
    const auto preds = character_predictions(net, by_writer, cfg);
    ledger.timer.mark("predict_seconds");

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw FlagError("--out", "cannot create '" + a.out + "': " + ec.message());
    json tables = json::object();
    json artifacts = json::array();
    for (int g : groups) {
        RankTable t;
        try {
            t = group_eval(preds, g, ks, cfg.combine);
        } catch (const ConfigError& e) {
            throw FlagError("--group-sizes", e.what());
        }
        const std::string name = "rank_g" + std::to_string(g) + ".csv";
        std::ofstream csv(fs::path(a.out) / name);
        if (!csv) throw FlagError("--out", "cannot write " + name);
        csv << "k,accuracy\n";
        for (std::size_t i = 0; i < t.ks.size(); ++i) csv << t.ks[i] << ',' << fmt_double(t.accuracy[i]) << '\n';
        tables[std::to_string(g)] = {{"samples", t.samples}, {"ranks", rank_json(t)}};
        artifacts.push_back(name);
        std::cout << "g=" << g << " top" << ks.front() << "=" << t.accuracy.front() << " (" << t.samples
                  << " samples)\n";
    }
    json summary;
    summary["model"] = a.model;
    summary["signature_level"] = level;
    summary["window"] = window_name(window);
    summary["writers"] = writers.size();
    summary["test_characters"] = n_test;
    summary["tests_per_char"] = a.tests_per_char;
    summary["group_tables"] = tables;
    Ledger::write_text((fs::path(a.out) / "summary.json").string(), summary.dump(2) + "\n");
    artifacts.push_back("summary.json");
    ledger.body["summary"] = summary;
    ledger.body["artifacts"] = artifacts;
    ledger.write((fs::path(a.out) / "").string());
}

struct SweepArgs {
    TrainArgs train;
    std::string levels = "0,1,2,3";
    std::string dropstroke = "both";
};

void cmd_sweep(const SweepArgs& s, const CLI::App& sub) {
    Ledger ledger;
    ledger.body["command"] = "sweep";
    ledger.body["config"] = echo_config(sub);
    if (!s.train.split_classes) throw FlagError("--split-classes", "sweep needs a held-out split");
    const auto levels = parse_int_list("--levels", s.levels, 0);
    std::vector<bool> modes;
    if (s.dropstroke != "off") modes.push_back(true);
    if (s.dropstroke != "on") modes.push_back(false);
    const auto corpus = load_jsonl(s.train.in);

    std::ofstream csv(s.train.out);
    if (!csv) throw FlagError("--out", "cannot write '" + s.train.out + "'");
    csv << "level,dropstroke,epoch,top1_error\n";
    json runs = json::array();
    for (int level : levels) {
        for (bool ds : modes) {
            json curve = json::array();
            run_training(corpus, s.train, level, ds, [&](const EpochRecord& r) {
                csv << level << ',' << (ds ? "on" : "off") << ',' << r.epoch << ',' << fmt_double(r.heldout_top1_error)
                    << '\n';
                csv.flush();
                curve.push_back(epoch_json(r));
                std::cout << "level " << level << " dropstroke " << (ds ? "on" : "off") << " epoch " << r.epoch
                          << " heldout_err " << r.heldout_top1_error << std::endl;
            });
            ledger.timer.mark("level" + std::to_string(level) + (ds ? "_on" : "_off") + "_seconds");
            runs.push_back({{"level", level}, {"dropstroke", ds ? "on" : "off"}, {"epochs", curve}});
        }
    }
    ledger.body["runs"] = runs;
    ledger.body["artifacts"] = json::array({s.train.out});
    ledger.write(s.train.out + ".");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Writer identification from online handwriting with path-signature features"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read flags from a key=value file (flags on the command line win)");

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Convert POT or JSONL files into one JSONL corpus");
    ingest_cmd->add_option("--format", ingest.format, "Input format")
        ->capture_default_str()
        ->check(CLI::IsMember({"pot", "jsonl"}));
    ingest_cmd->add_option("--in", ingest.in, "Input files")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest.out, "Output corpus (JSONL)")->required();
    ingest_cmd->add_flag("--swap-tag-bytes", ingest.swap_tag_bytes, "Read POT tag codes in swapped byte order");

    StatsArgs stats;
    auto* stats_cmd = app.add_subcommand("stats", "Stroke-count histogram, optionally after DropStroke");
    stats_cmd->add_option("--in", stats.in, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
    stats_cmd->add_flag("--dropstroke", stats.dropstroke, "Count every DropStroke variant");
    stats_cmd->add_option("--out", stats.out, "Histogram CSV")->required();

    RenderArgs rend;
    auto* render_cmd = app.add_subcommand("render", "Write signature feature maps as PGM images");
    render_cmd->add_option("--in", rend.in, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--level", rend.level, "Signature truncation level N (0-6)")->capture_default_str();
    render_cmd->add_option("--window", rend.window, "Window half-width D, or 'inf'")->capture_default_str();
    render_cmd->add_flag("--equalize", rend.equalize, "Histogram-equalize each channel over the pen trace");
    render_cmd->add_option("--limit", rend.limit, "Render only the first N characters (0: all)")->capture_default_str();
    render_cmd->add_option("--out", rend.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a writer-identification network");
    add_train_options(train_cmd, tr);
    train_cmd->add_option("--writers-file", tr.writers_file, "Writer table to write (default: <out>.writers)");
    train_cmd->add_option("--dropstroke", tr.dropstroke, "DropStroke augmentation")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    train_cmd->add_option("--out", tr.out, "Model file")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Rank tables for single characters and character groups");
    eval_cmd->add_option("--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--in", ev.in, "Corpus (JSONL)")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--writers-file", ev.writers_file, "Writer table (default: <model>.writers)");
    eval_cmd->add_option("--tests-per-char", ev.tests_per_char, "DropStroke variants averaged per character")
        ->capture_default_str();
    eval_cmd->add_option("--group-sizes", ev.group_sizes, "Comma-separated group sizes")->capture_default_str();
    eval_cmd->add_option("--topk", ev.topk, "Comma-separated ranks")->capture_default_str();
    eval_cmd->add_option("--seed", ev.seed, "Seed for test-time DropStroke")->required();
    eval_cmd->add_option("--split-classes", ev.split_classes, "Recreate a training split and score its test side");
    eval_cmd->add_option("--split-seed", ev.split_seed, "Seed of that split (default: --seed)");
    eval_cmd->add_option("--window", ev.window, "Window half-width D used in training, or 'inf'")
        ->capture_default_str();
    eval_cmd->add_option("--combine", ev.combine, "mean or log-sum")
        ->capture_default_str()
        ->check(CLI::IsMember({"mean", "log-sum"}));
    eval_cmd->add_option("--drop-mode", ev.drop_mode, "Test-time DropStroke sampling")
        ->capture_default_str()
        ->check(CLI::IsMember({"uniform-m", "uniform-variant", "enumerate"}));
    eval_cmd->add_option("--max-drop-fraction", ev.max_drop_fraction, "Largest fraction of strokes dropped")
        ->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Held-out error curves per signature level, with and without DropStroke");
    add_train_options(sweep_cmd, sw.train);
    sweep_cmd->add_option("--levels", sw.levels, "Comma-separated signature levels")->capture_default_str();
    sweep_cmd->add_option("--dropstroke", sw.dropstroke, "on, off or both")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off", "both"}));
    sweep_cmd->add_option("--out", sw.train.out, "Curve CSV (level,dropstroke,epoch,top1_error)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "inksig: error: " << e.what() << "\n";
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    }

    try {
        if (*ingest_cmd) cmd_ingest(ingest, *ingest_cmd);
        else if (*stats_cmd) cmd_stats(stats, *stats_cmd);
        else if (*render_cmd) cmd_render(rend, *render_cmd);
        else if (*train_cmd) cmd_train(tr, *train_cmd);
        else if (*eval_cmd) cmd_eval(ev, *eval_cmd);
        else if (*sweep_cmd) cmd_sweep(sw, *sweep_cmd);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::cerr << "inksig: error: " << msg << "\n";
        return 1;
    }
    return 0;
}
