#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "grouprec/checkpoint.hpp"
#include "grouprec/data.hpp"
#include "grouprec/digest.hpp"
#include "grouprec/eval.hpp"
#include "grouprec/experiments.hpp"
#include "grouprec/groups.hpp"
#include "grouprec/models.hpp"
#include "grouprec/numkit/kernels.hpp"
#include "grouprec/text.hpp"
#include "grouprec/training.hpp"

namespace grouprec::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

char separator_char(const std::string& s) {
    if (s == "\\t" || s == "tab") return '\t';
    if (s.size() != 1) throw UsageError("--sep must be a single character, got '" + s + "'");
    return s[0];
}

struct DataFlags {
    std::string dir;
    std::string sep = ";";

    void add(CLI::App* sub) {
        sub->add_option("--data", dir, "Dataset directory with train.csv and test.csv (e.g. an ingest run)")
            ->required();
        sub->add_option("--sep", sep, "Field separator of the rating files")->capture_default_str();
    }
    fs::path train() const { return fs::path(dir) / "train.csv"; }
    fs::path test() const { return fs::path(dir) / "test.csv"; }

    RatingDataset load() const {
        const fs::path d(dir);
        if (!fs::is_directory(d)) throw DataError("dataset directory not found: " + d.string());
        std::string name = fs::absolute(d).lexically_normal().filename().string();
        if (name.empty()) name = fs::absolute(d).lexically_normal().parent_path().filename().string();
        if (std::ifstream in(d / "dataset.txt"); in) {
            std::string line;
            std::getline(in, line);
            if (!trim(line).empty()) name = std::string(trim(line));
        }
        FormatSpec fmt;
        fmt.separator = separator_char(sep);
        return load_ratings(train(), test(), fmt, name);
    }
};

void add_train_flags(CLI::App* sub, TrainConfig& c) {
    sub->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--batch", c.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_option("--max-epochs", c.max_epochs, "Epoch cap")->capture_default_str();
    sub->add_option("--patience", c.patience, "Early-stop patience in epochs")->capture_default_str();
    sub->add_option("--val-fraction", c.validation_fraction, "Held-out validation fraction")->capture_default_str();
    sub->add_option("--min-delta", c.min_delta, "Minimum validation improvement")->capture_default_str();
}

std::vector<HFunction> parse_h_list(const std::vector<std::string>& names) {
    std::vector<HFunction> out;
    for (const auto& n : names) out.push_back(parse_hfunction(n));
    if (out.empty()) throw UsageError("empty h list");
    return out;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One command invocation: its run directory, manifest and artifact list.
class Run {
public:
    Run(std::string command, const CLI::App& sub, const std::string& out_root,
        const std::vector<std::pair<std::string, fs::path>>& inputs, const std::string& command_line,
        const std::string& config_file)
        : start_(std::chrono::steady_clock::now()) {
        std::string config;
        std::istringstream lines(sub.config_to_str(true, false));
        for (std::string line; std::getline(lines, line);)
            if (!line.starts_with("out=") && !line.starts_with("config=")) config += line + '\n';

        json in = json::object();
        for (const auto& [label, path] : inputs) {
            if (!fs::exists(path)) throw std::runtime_error("input not found: " + path.string());
            in[label] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
        }
        id_ = sha256_hex(command + '\n' + config + in.dump()).substr(0, 16);
        dir_ = fs::path(out_root) / id_;
        fs::create_directories(dir_);

        manifest_["manifest_id"] = id_;
        manifest_["command"] = command;
        manifest_["command_line"] = command_line;
        manifest_["version"] = kVersion;
        manifest_["kernels"] = std::string(nk::kernels().name);
        manifest_["effective_config"] = config;
        manifest_["config_digest"] = sha256_hex(config);
        if (!config_file.empty()) {
            manifest_["config_file"] = config_file;
            manifest_["config_file_digest"] = sha256_file(config_file);
        }
        manifest_["inputs"] = in;
        manifest_["started_at"] = utc_now();
    }

    const std::string& id() const { return id_; }
    const fs::path& dir() const { return dir_; }
    json& results() { return manifest_["results"]; }
    void seeds(const std::vector<std::uint64_t>& s) { manifest_["seeds"] = s; }

    fs::path artifact(const std::string& name) {
        if (std::find(artifacts_.begin(), artifacts_.end(), name) == artifacts_.end()) artifacts_.push_back(name);
        return dir_ / name;
    }

    void finish(std::ostream& out) {
        json list = json::array();
        for (const auto& name : artifacts_) {
            const fs::path p = dir_ / name;
            if (!fs::is_regular_file(p)) throw std::runtime_error("artifact was not written: " + p.string());
            list.push_back({{"file", name}, {"sha256", sha256_file(p)}});
        }
        manifest_["artifacts"] = list;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        manifest_["timings"] = {{"wall_seconds", secs}};
        write_file(dir_ / "manifest.json", manifest_.dump(2) + '\n');
        out << "run " << id_ << " -> " << dir_.string() << '\n';
    }

private:
    std::chrono::steady_clock::time_point start_;
    std::string id_;
    fs::path dir_;
    json manifest_;
    std::vector<std::string> artifacts_;
};

struct Context {
    std::string command_line;
    std::string config_file;
    std::ostream& out;
};

// ---------------------------------------------------------------- ingest

struct IngestArgs {
    std::string train, test, sep = ";", name = "dataset", out = "runs";
    std::optional<float> scale_min, scale_max;
};

void cmd_ingest(const IngestArgs& a, const CLI::App& sub, Context& ctx) {
    FormatSpec fmt;
    fmt.separator = separator_char(a.sep);
    fmt.scale_min = a.scale_min;
    fmt.scale_max = a.scale_max;
    RatingDataset ds = load_ratings(a.train, a.test, fmt, a.name);

    Run run("ingest", sub, a.out, {{"train", a.train}, {"test", a.test}}, ctx.command_line, ctx.config_file);
    write_canonical(ds, Split::Train, run.artifact("train.csv"));
    write_canonical(ds, Split::Test, run.artifact("test.csv"));
    write_file(run.artifact("dataset.txt"), a.name + '\n');
    const auto stats = dataset_stats(ds);
    write_file(run.artifact("stats.txt"), format_stats(stats, a.name));
    write_file(run.artifact("stats.csv"), format_stats_csv(stats, a.name));

    Sha256 bundle;
    for (const char* f : {"train.csv", "test.csv", "dataset.txt"}) bundle.update(read_file(run.dir() / f));
    const std::string digest = bundle.hex();
    run.results()["bundle_digest"] = digest;
    run.results()["id_map_digest"] = ds.id_map_digest();
    ctx.out << format_stats(stats, a.name) << "bundle_digest=" << digest << '\n';
    run.finish(ctx.out);
}

// ---------------------------------------------------------------- train-base

struct TrainBaseArgs {
    DataFlags data;
    std::string model = "gmf", out = "runs";
    std::size_t k = kDefaultLatentDim;
    std::vector<std::size_t> tower = kDefaultHiddenWidths;
    std::uint64_t seed = 1;
    TrainConfig train;
};

void cmd_train_base(TrainBaseArgs& a, const CLI::App& sub, Context& ctx) {
    const BaseKind kind = parse_base_kind(a.model);
    const RatingDataset ds = a.data.load();
    Run run("train-base", sub, a.out, {{"train", a.data.train()}, {"test", a.data.test()}}, ctx.command_line,
            ctx.config_file);
    run.seeds({a.seed});

    CheckpointMeta meta{a.seed, ds.id_map_digest(), run.id(), 0, std::nullopt, {}};
    const fs::path ckpt = run.artifact("base.ckpt");
    ExperimentOptions opt;
    opt.latent_dim = a.k;
    opt.tower_widths = a.tower;
    opt.train = a.train;
    opt.train.on_base_improvement = [&](const BaseModel& m, std::size_t) { save_base(ckpt, m, meta); };
    TrainTrace trace;
    const BaseModel base = train_base(ds, kind, a.seed, opt, &trace);
    save_base(ckpt, base, meta);
    write_file(run.artifact("trace.csv"), trace.to_csv());

    double mean = 0.0;
    for (const auto& r : ds.train()) mean += r.rating;
    mean /= static_cast<double>(ds.train().size());
    double baseline = 0.0;
    for (const auto& r : ds.test()) baseline += std::abs(static_cast<double>(r.rating) - mean);
    baseline /= static_cast<double>(ds.test().size());
    const double test_mae = individual_mae(base, ds.test());
    const auto& best = trace.epochs.at(trace.best_epoch);

    auto& res = run.results();
    res["best_epoch"] = trace.best_epoch;
    res["final_epoch"] = trace.final_epoch();
    res["stop_reason"] = std::string(to_string(trace.stop_reason));
    res["best_val_loss"] = format_number(best.val_loss);
    res["test_mae"] = format_number(test_mae);
    res["global_mean_test_mae"] = format_number(baseline);
    res["base_digest"] = sha256_file(ckpt);
    ctx.out << "best_epoch=" << trace.best_epoch << " final_epoch=" << trace.final_epoch()
            << " stop=" << to_string(trace.stop_reason) << '\n'
            << "best_val_loss=" << format_number(best.val_loss) << '\n'
            << "test_mae=" << format_number(test_mae) << " global_mean_test_mae=" << format_number(baseline) << '\n';
    run.finish(ctx.out);
}

// ---------------------------------------------------------------- gen-groups

struct GenGroupsArgs {
    DataFlags data;
    std::size_t size = 0;
    std::optional<std::size_t> count, train_count, test_count;
    bool paper_counts = false;
    std::uint64_t seed = 1;
    std::string out = "runs";
};

void cmd_gen_groups(const GenGroupsArgs& a, const CLI::App& sub, Context& ctx) {
    const RatingDataset ds = a.data.load();
    Run run("gen-groups", sub, a.out, {{"train", a.data.train()}, {"test", a.data.test()}}, ctx.command_line,
            ctx.config_file);
    run.seeds({a.seed});
    ExperimentOptions opt;
    opt.train_groups = a.train_count ? a.train_count : a.count;
    opt.test_groups = a.test_count ? a.test_count : a.count;
    const GroupSets sets = make_group_sets(ds, a.size, a.seed, opt);
    const std::string stem = "groups_G" + std::to_string(a.size);
    write_groups(ds, sets.train, run.artifact(stem + "_train.txt"));
    write_groups(ds, sets.test, run.artifact(stem + "_test.txt"));
    run.results()["train_groups"] = sets.train.size();
    run.results()["test_groups"] = sets.test.size();
    ctx.out << "G=" << a.size << " train_groups=" << sets.train.size() << " test_groups=" << sets.test.size() << '\n';
    run.finish(ctx.out);
}

// ---------------------------------------------------------------- train-group

struct TrainGroupArgs {
    DataFlags data;
    std::string base, groups, h = "mean", out = "runs";
    std::vector<std::size_t> layers;
    std::size_t size = 0;
    std::uint64_t seed = 1;
    bool allow_size_mismatch = false;
    TrainConfig train;
};

BaseCheckpoint load_base_for(const RatingDataset& ds, const std::string& path) {
    BaseCheckpoint ckpt = load_base(path);
    if (ckpt.meta.id_map_digest != ds.id_map_digest())
        throw std::runtime_error("base checkpoint " + path + " was trained on a different dataset id map");
    if (!ckpt.model.frozen) throw std::runtime_error("base checkpoint " + path + " is not frozen");
    return ckpt;
}

void cmd_train_group(TrainGroupArgs& a, const CLI::App& sub, Context& ctx) {
    const HFunction h = parse_hfunction(a.h);
    const RatingDataset ds = a.data.load();
    BaseCheckpoint ckpt = load_base_for(ds, a.base);
    const auto groups = read_groups(ds, a.groups);
    if (groups.empty()) throw DataError("no groups in " + a.groups);
    const std::size_t g = a.size ? a.size : groups.front().size();

    Run run("train-group", sub, a.out,
            {{"train", a.data.train()}, {"test", a.data.test()}, {"base", a.base}, {"groups", a.groups}},
            ctx.command_line, ctx.config_file);
    run.seeds({a.seed});

    ExperimentOptions opt;
    opt.head_widths = a.layers;
    const auto base = std::make_shared<const BaseModel>(std::move(ckpt.model));
    GroupModel model(base, init_head(ds, opt, base->latent_dim(), a.seed, g), g);
    model.allow_size_mismatch = a.allow_size_mismatch;

    const std::string base_file_before = sha256_file(a.base);
    const std::string base_bytes_before = sha256_hex(serialize_base(*base, ckpt.meta));
    CheckpointMeta meta{a.seed, ds.id_map_digest(), run.id(), g, h, base_file_before};
    const fs::path head_path = run.artifact("head.ckpt");
    TrainConfig cfg = a.train;
    cfg.seed = a.seed;
    cfg.h = h;
    cfg.on_head_improvement = [&](const GroupHead& head, std::size_t) { save_head(head_path, head, base->kind, meta); };
    const TrainTrace trace = train_group_head(model, groups, cfg);
    save_head(head_path, model.head, base->kind, meta);
    write_file(run.artifact("trace.csv"), trace.to_csv());

    const std::string base_bytes_after = sha256_hex(serialize_base(*base, ckpt.meta));
    const std::string base_file_after = sha256_file(a.base);
    if (base_bytes_before != base_bytes_after || base_file_before != base_file_after)
        throw std::logic_error("base parameters changed during group-head training");

    auto& res = run.results();
    res["group_size"] = g;
    res["h"] = a.h;
    res["best_epoch"] = trace.best_epoch;
    res["final_epoch"] = trace.final_epoch();
    res["stop_reason"] = std::string(to_string(trace.stop_reason));
    res["initial_val_loss"] = format_number(trace.epochs.front().val_loss);
    res["best_val_loss"] = format_number(trace.epochs.at(trace.best_epoch).val_loss);
    res["base_digest_before"] = base_file_before;
    res["base_digest_after"] = base_file_after;
    ctx.out << "G=" << g << " h=" << a.h << " best_epoch=" << trace.best_epoch
            << " best_val_loss=" << format_number(trace.epochs.at(trace.best_epoch).val_loss) << '\n'
            << "base_digest=" << base_file_after << " (unchanged)\n";
    run.finish(ctx.out);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    DataFlags data;
    std::string base, head, groups, out = "runs";
    std::vector<std::string> predictors;
    bool allow_size_mismatch = false;
};

std::string quartile_row(const std::string& label, std::size_t g, const GroupMseResult& r) {
    const auto q = quartiles(r.per_sample);
    return label + ',' + std::to_string(g) + ',' + format_number(q.min) + ',' + format_number(q.q1) + ',' +
           format_number(q.median) + ',' + format_number(q.q3) + ',' + format_number(q.max) + '\n';
}

void cmd_eval(const EvalArgs& a, const CLI::App& sub, Context& ctx) {
    const RatingDataset ds = a.data.load();
    const BaseCheckpoint base = load_base_for(ds, a.base);
    std::optional<HeadCheckpoint> head;
    if (!a.head.empty()) {
        head = load_head(a.head);
        if (head->meta.base_digest != sha256_file(a.base))
            throw std::runtime_error("head checkpoint " + a.head + " was trained on a different base checkpoint");
        if (head->base_kind != base.model.kind) throw std::runtime_error("head and base model kinds differ");
    }
    const auto groups = read_groups(ds, a.groups);
    if (groups.empty()) throw DataError("no groups in " + a.groups);

    std::vector<std::string> predictors = a.predictors;
    if (predictors.empty()) {
        if (head) predictors.push_back("group");
        predictors.insert(predictors.end(), {"ipa", "moavg", "oracle-floor"});
    }
    std::vector<std::pair<std::string, fs::path>> inputs{
        {"train", a.data.train()}, {"test", a.data.test()}, {"base", a.base}, {"groups", a.groups}};
    if (head) inputs.emplace_back("head", a.head);
    Run run("eval", sub, a.out, inputs, ctx.command_line, ctx.config_file);

    const auto base_ptr = std::make_shared<const BaseModel>(base.model);
    std::optional<GroupModel> model;
    if (head) {
        model.emplace(base_ptr, head->head, head->meta.group_size);
        model->allow_size_mismatch = a.allow_size_mismatch;
    }
    const std::string suffix = base.model.kind == BaseKind::GMF ? "GMF" : "MLP";
    const std::size_t g = groups.front().size();
    const std::uint64_t seed = head ? head->meta.seed : base.meta.seed;

    std::vector<SummaryRow> rows;
    std::string quart = "model,G,min,q1,median,q3,max\n";
    for (const auto& p : predictors) {
        std::string label, h = "-";
        GroupPredictor pred;
        if (p == "group") {
            if (!model) throw UsageError("predictor 'group' needs --head");
            label = "G" + suffix;
            h = std::string(to_string(*head->meta.h));
            pred = make_group_model_predictor(*model);
        } else if (p == "ipa") {
            label = "IPA-" + suffix;
            pred = make_ipa_predictor(*base_ptr);
        } else if (p == "moavg") {
            label = "MO-AVG-" + suffix;
            pred = make_moavg_predictor(*base_ptr);
        } else if (p == "oracle-floor") {
            label = "ORACLE-FLOOR";
            pred = make_oracle_floor_predictor();
        } else {
            throw UsageError("unknown predictor '" + p + "' (group, ipa, moavg, oracle-floor)");
        }
        const std::size_t expected = (p == "group" && !a.allow_size_mismatch) ? model->group_size : 0;
        const auto result = group_mse(pred, groups, expected);
        write_file(run.artifact("per_sample_" + label + ".csv"), format_per_sample_csv(ds, groups, result));
        quart += quartile_row(label, g, result);
        rows.push_back({ds.name(), label, h, g, result.mse, result.per_sample.size(), seed});
        ctx.out << label << " mse=" << format_number(result.mse) << '\n';
    }
    write_file(run.artifact("summary.csv"), format_summary_csv(rows));
    write_file(run.artifact("quartiles.csv"), quart);
    run.finish(ctx.out);
}

// ---------------------------------------------------------------- sweep-h / compare

struct ExperimentArgs {
    DataFlags data;
    std::string model = "gmf", out = "runs";
    std::vector<std::size_t> sizes{2, 5, 8};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<std::string> h_list{"min", "max", "mean", "median", "mode"};
    std::size_t k = kDefaultLatentDim;
    std::vector<std::size_t> tower = kDefaultHiddenWidths;
    std::vector<std::size_t> layers;
    std::optional<std::size_t> count, test_count;
    bool per_sample = false;
    TrainConfig train;

    ExperimentOptions options(Run& run) const {
        ExperimentOptions opt;
        opt.latent_dim = k;
        opt.tower_widths = tower;
        opt.head_widths = layers;
        opt.train = train;
        opt.train_groups = count;
        opt.test_groups = test_count ? test_count : count;
        opt.threads = worker_threads_from_env();
        if (per_sample) opt.per_sample_dir = run.dir() / "per_sample";
        return opt;
    }
};

void add_experiment_flags(CLI::App* sub, ExperimentArgs& a) {
    a.data.add(sub);
    sub->add_option("--sizes", a.sizes, "Group sizes")->delimiter(',')->capture_default_str();
    sub->add_option("--seeds", a.seeds, "Seeds; one full run per seed")->delimiter(',')->capture_default_str();
    sub->add_option("--k", a.k, "Latent dimension")->capture_default_str();
    sub->add_option("--tower", a.tower, "MLP tower hidden widths")->delimiter(',')->capture_default_str();
    sub->add_option("--layers", a.layers, "Group head widths (default by dataset size)")->delimiter(',');
    sub->add_option("--count", a.count, "Groups per split instead of the published counts");
    sub->add_option("--test-count", a.test_count, "Test groups (defaults to --count)");
    sub->add_flag("--per-sample", a.per_sample, "Write per-sample CSVs");
    sub->add_option("--out", a.out, "Output root")->capture_default_str();
    add_train_flags(sub, a.train);
}

void finish_experiment(Run& run, const ExperimentArgs& a, const std::vector<SummaryRow>& rows, Context& ctx) {
    write_file(run.artifact("summary.csv"), format_summary_csv(rows));
    if (a.per_sample) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(run.dir() / "per_sample"))
            names.push_back("per_sample/" + e.path().filename().string());
        std::sort(names.begin(), names.end());
        for (const auto& n : names) run.artifact(n);
    }
    run.seeds(a.seeds);
    ctx.out << format_summary_csv(rows);
    run.finish(ctx.out);
}

void cmd_sweep_h(const ExperimentArgs& a, const CLI::App& sub, Context& ctx) {
    const BaseKind kind = parse_base_kind(a.model);
    const auto h_list = parse_h_list(a.h_list);
    const RatingDataset ds = a.data.load();
    Run run("sweep-h", sub, a.out, {{"train", a.data.train()}, {"test", a.data.test()}}, ctx.command_line,
            ctx.config_file);
    const auto rows = run_sweep(ds, kind, a.sizes, a.seeds, h_list, a.options(run));
    finish_experiment(run, a, rows, ctx);
}

void cmd_compare(const ExperimentArgs& a, const CLI::App& sub, Context& ctx) {
    const RatingDataset ds = a.data.load();
    Run run("compare", sub, a.out, {{"train", a.data.train()}, {"test", a.data.test()}}, ctx.command_line,
            ctx.config_file);
    const auto rows = run_comparison(ds, a.sizes, a.seeds, a.options(run));
    finish_experiment(run, a, rows, ctx);
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> summaries;
    std::string per_sample_dir, out = "runs";
};

void cmd_report(const ReportArgs& a, const CLI::App& sub, Context& ctx) {
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<SummaryRow> rows;
    for (std::size_t n = 0; n < a.summaries.size(); ++n) {
        const auto text = read_file(a.summaries[n]);
        auto part = parse_summary_csv(text);
        rows.insert(rows.end(), part.begin(), part.end());
        inputs.emplace_back("summary" + std::to_string(n + 1), a.summaries[n]);
    }
    if (rows.empty()) throw DataError("no summary rows to report");
    Run run("report", sub, a.out, inputs, ctx.command_line, ctx.config_file);

    struct Agg {
        std::vector<double> mse;
    };
    std::vector<std::tuple<std::string, std::string, std::string, std::size_t>> keys;
    std::map<std::tuple<std::string, std::string, std::string, std::size_t>, Agg> agg;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.dataset, r.model, r.h, r.group_size);
        auto [it, fresh] = agg.try_emplace(key);
        if (fresh) keys.push_back(key);
        it->second.mse.push_back(r.mse);
    }
    std::string csv = "dataset,model,h,G,n_seeds,mean_mse,min_mse,max_mse\n";
    for (const auto& key : keys) {
        const auto& v = agg[key].mse;
        double sum = 0.0;
        for (double x : v) sum += x;
        csv += std::get<0>(key) + ',' + std::get<1>(key) + ',' + std::get<2>(key) + ',' +
               std::to_string(std::get<3>(key)) + ',' + std::to_string(v.size()) + ',' +
               format_number(sum / static_cast<double>(v.size())) + ',' +
               format_number(*std::min_element(v.begin(), v.end())) + ',' +
               format_number(*std::max_element(v.begin(), v.end())) + '\n';
    }
    write_file(run.artifact("aggregate.csv"), csv);
    ctx.out << csv;

    if (!a.per_sample_dir.empty()) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(a.per_sample_dir))
            if (e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::string quart = "file,n,min,q1,median,q3,max\n";
        for (const auto& f : files) {
            std::vector<double> values;
            const std::string text = read_file(f);
            bool header = true;
            for (auto line : split(text, '\n')) {
                if (trim(line).empty()) continue;
                if (header) {
                    header = false;
                    continue;
                }
                const auto fields = split(line, ',');
                const auto v = fields.size() == 5 ? parse_double(fields[4]) : std::nullopt;
                if (!v) throw DataError("malformed per-sample line in " + f.string());
                values.push_back(*v);
            }
            if (values.empty()) continue;
            const auto q = quartiles(values);
            quart += f.filename().string() + ',' + std::to_string(values.size()) + ',' + format_number(q.min) + ',' +
                     format_number(q.q1) + ',' + format_number(q.median) + ',' + format_number(q.q3) + ',' +
                     format_number(q.max) + '\n';
        }
        write_file(run.artifact("quartiles.csv"), quart);
    }
    run.finish(ctx.out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Group recommendation toolkit: individual bases, group heads, synthetic groups, evaluation"};
    app.name("grouprec");
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Index rating files into a dataset bundle");
    s_ingest->add_option("--train", ingest.train, "Training ratings file")->required();
    s_ingest->add_option("--test", ingest.test, "Test ratings file")->required();
    s_ingest->add_option("--sep", ingest.sep, "Field separator")->capture_default_str();
    s_ingest->add_option("--name", ingest.name, "Dataset name")->capture_default_str();
    s_ingest->add_option("--scale-min", ingest.scale_min, "Lowest valid rating (default: observed)");
    s_ingest->add_option("--scale-max", ingest.scale_max, "Highest valid rating (default: observed)");
    s_ingest->add_option("--out", ingest.out, "Output root")->capture_default_str();

    TrainBaseArgs tb;
    auto* s_tb = app.add_subcommand("train-base", "Train an individual GMF or MLP model");
    tb.data.add(s_tb);
    s_tb->add_option("--model", tb.model, "gmf or mlp")->capture_default_str();
    s_tb->add_option("--k", tb.k, "Latent dimension")->capture_default_str();
    s_tb->add_option("--tower", tb.tower, "MLP tower hidden widths")->delimiter(',')->capture_default_str();
    s_tb->add_option("--seed", tb.seed, "Seed")->capture_default_str();
    s_tb->add_option("--out", tb.out, "Output root")->capture_default_str();
    add_train_flags(s_tb, tb.train);

    GenGroupsArgs gg;
    auto* s_gg = app.add_subcommand("gen-groups", "Draw synthetic train and test groups");
    gg.data.add(s_gg);
    s_gg->add_option("--size", gg.size, "Group size G")->required();
    s_gg->add_flag("--paper-counts", gg.paper_counts, "Use the published group counts (default)");
    s_gg->add_option("--count", gg.count, "Groups per split; overrides the published counts");
    s_gg->add_option("--train-count", gg.train_count, "Train groups");
    s_gg->add_option("--test-count", gg.test_count, "Test groups");
    s_gg->add_option("--seed", gg.seed, "Seed")->capture_default_str();
    s_gg->add_option("--out", gg.out, "Output root")->capture_default_str();

    TrainGroupArgs tg;
    auto* s_tg = app.add_subcommand("train-group", "Train a group head on a frozen base");
    tg.data.add(s_tg);
    s_tg->add_option("--base", tg.base, "Base checkpoint")->required();
    s_tg->add_option("--groups", tg.groups, "Training group file")->required();
    s_tg->add_option("--h", tg.h, "Label function: min, max, mean, median, mode")->capture_default_str();
    s_tg->add_option("--layers", tg.layers, "Head widths, last must equal K (default by dataset size)")
        ->delimiter(',');
    s_tg->add_option("--size", tg.size, "Group size (default: size of the first group)");
    s_tg->add_option("--seed", tg.seed, "Seed")->capture_default_str();
    s_tg->add_flag("--allow-size-mismatch", tg.allow_size_mismatch, "Accept groups of other sizes");
    s_tg->add_option("--out", tg.out, "Output root")->capture_default_str();
    add_train_flags(s_tg, tg.train);

    EvalArgs ev;
    auto* s_ev = app.add_subcommand("eval", "Group MSE of predictors on a group file");
    ev.data.add(s_ev);
    s_ev->add_option("--base", ev.base, "Base checkpoint")->required();
    s_ev->add_option("--head", ev.head, "Head checkpoint");
    s_ev->add_option("--groups", ev.groups, "Test group file")->required();
    s_ev->add_option("--predictors", ev.predictors, "group, ipa, moavg, oracle-floor")->delimiter(',');
    s_ev->add_flag("--allow-size-mismatch", ev.allow_size_mismatch, "Accept groups of other sizes");
    s_ev->add_option("--out", ev.out, "Output root")->capture_default_str();

    ExperimentArgs sw;
    auto* s_sw = app.add_subcommand("sweep-h", "Train and evaluate one head per (h, G)");
    add_experiment_flags(s_sw, sw);
    s_sw->add_option("--model", sw.model, "gmf or mlp")->capture_default_str();
    s_sw->add_option("--h-list", sw.h_list, "Label functions")->delimiter(',')->capture_default_str();

    ExperimentArgs cmp;
    auto* s_cmp = app.add_subcommand("compare", "GGMF, GMLP, IPA and MO-AVG predictors per G");
    add_experiment_flags(s_cmp, cmp);

    ReportArgs rep;
    auto* s_rep = app.add_subcommand("report", "Aggregate summary CSVs over seeds");
    s_rep->add_option("--summary", rep.summaries, "Summary CSV files")->required();
    s_rep->add_option("--per-sample-dir", rep.per_sample_dir, "Directory of per-sample CSVs for quartiles");
    s_rep->add_option("--out", rep.out, "Output root")->capture_default_str();

    std::string command_line;
    for (const auto& a : args) command_line += (command_line.empty() ? "" : " ") + a;
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    std::string config_file;
    if (auto* opt = app.get_config_ptr(); opt && opt->count() > 0) config_file = opt->as<std::string>();
    Context ctx{command_line, config_file, out};
    try {
        if (*s_ingest) cmd_ingest(ingest, *s_ingest, ctx);
        else if (*s_tb) cmd_train_base(tb, *s_tb, ctx);
        else if (*s_gg) cmd_gen_groups(gg, *s_gg, ctx);
        else if (*s_tg) cmd_train_group(tg, *s_tg, ctx);
        else if (*s_ev) cmd_eval(ev, *s_ev, ctx);
        else if (*s_sw) cmd_sweep_h(sw, *s_sw, ctx);
        else if (*s_cmp) cmd_compare(cmp, *s_cmp, ctx);
        else if (*s_rep) cmd_report(rep, *s_rep, ctx);
    } catch (const UsageError& e) {
        err << "grouprec: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "grouprec: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace grouprec::cli
