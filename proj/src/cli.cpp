#include "kcheck/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "kcheck/baselines.hpp"
#include "kcheck/checker.hpp"
#include "kcheck/error.hpp"
#include "kcheck/json_util.hpp"
#include "kcheck/metrics.hpp"
#include "kcheck/rag.hpp"
#include "kcheck/repstore.hpp"
#include "kcheck/synthetic.hpp"

#ifndef KCHECK_VERSION
#define KCHECK_VERSION "0.0.0"
#endif

namespace kcheck {

namespace fs = std::filesystem;

std::string toolkit_version() { return KCHECK_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        char* end = nullptr;
        const long long v = std::strtoll(epoch, &end, 10);
        if (end && *end == '\0') t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string write_manifest(const Manifest& m) {
    if (m.outputs.empty()) throw InputError("manifest needs at least one output");
    nlohmann::ordered_json doc;
    doc["command"] = m.command;
    doc["args"] = m.args;
    doc["config_hash"] = hex64(fnv1a64(m.args.dump()));
    doc["seed"] = m.seed;
    doc["inputs"] = m.inputs;
    doc["outputs"] = m.outputs;
    doc["version"] = toolkit_version();
    doc["timestamp"] = utc_timestamp();
    const std::string path = m.outputs.front() + ".manifest.json";
    write_json_file(doc, path);
    return path;
}

namespace {

// ---------------------------------------------------------------- config

/// JSON config files for CLI11. Nested objects address subcommands; a
/// top-level key that is not a global option goes to the innermost selected
/// subcommand that has it. Underscores in keys match dashes in option names.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
        return options_json(app).dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(doc, {}, items);
        return items;
    }

    static nlohmann::ordered_json options_json(const CLI::App* app) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (const CLI::Option* opt : app->get_options()) {
            const std::string name = opt->get_single_name();
            if (name == "help" || name == "config") continue;
            if (opt->count() > 0) {
                const auto& r = opt->results();
                if (opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1) {
                    obj[name] = r;
                } else {
                    obj[name] = r.back();
                }
            } else if (!opt->get_default_str().empty()) {
                obj[name] = opt->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands()) obj[sub->get_name()] = options_json(sub);
        return obj;
    }

private:
    static std::string option_name(const std::string& key) {
        std::string s = key;
        std::replace(s.begin(), s.end(), '_', '-');
        return s;
    }

    static std::vector<std::string> inputs_of(const nlohmann::json& v) {
        std::vector<std::string> out;
        auto scalar = [](const nlohmann::json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
        if (v.is_array()) {
            for (const auto& x : v) out.push_back(scalar(x));
        } else {
            out.push_back(scalar(v));
        }
        return out;
    }

    std::vector<std::string> route(const std::string& name) const {
        if (root_->get_option_no_throw("--" + name)) return {};
        std::vector<std::string> chain;
        std::vector<std::string> best;
        for (const CLI::App* app = root_; !app->get_subcommands().empty();) {
            app = app->get_subcommands().front();
            chain.push_back(app->get_name());
            if (app->get_option_no_throw("--" + name)) best = chain;
        }
        return best;
    }

    void collect(const nlohmann::json& obj, const std::vector<std::string>& parents,
                 std::vector<CLI::ConfigItem>& items) const {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_null()) continue;
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                collect(value, next, items);
                continue;
            }
            CLI::ConfigItem item;
            item.name = option_name(key);
            item.parents = parents.empty() ? route(item.name) : parents;
            item.inputs = inputs_of(value);
            items.push_back(std::move(item));
        }
    }

    const CLI::App* root_;
};

// ---------------------------------------------------------------- helpers

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::uint64_t seed = 0;
    std::string out_dir;
    CLI::App* root = nullptr;

    std::string output_path(const std::string& path) const {
        fs::path p(path);
        if (!out_dir.empty() && p.is_relative()) p = fs::path(out_dir) / p;
        if (p.has_parent_path()) {
            std::error_code ec;
            fs::create_directories(p.parent_path(), ec);
            if (ec) throw InputError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
        }
        return p.string();
    }

    std::string output_dir(const std::string& path) const {
        fs::path p(path);
        if (!out_dir.empty() && p.is_relative()) p = fs::path(out_dir) / p;
        return p.string();
    }

    Manifest manifest(const std::string& command) const {
        Manifest m;
        m.command = command;
        m.args = JsonConfig::options_json(root);
        m.seed = seed;
        return m;
    }
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    return out;
}

std::vector<RepresentationRecord> load_nonempty(const std::string& path) {
    auto records = load_representations(path);
    if (records.empty()) throw InputError(path + ": file contains no records");
    return records;
}

Task uniform_task(const std::vector<RepresentationRecord>& records, const std::string& path) {
    const Task t = records.front().task;
    for (const auto& r : records) {
        if (r.task != t) throw InputError(path + ": records mix tasks (" + r.id + ")");
    }
    return t;
}

void require_task(const std::vector<RepresentationRecord>& records, Task task, const std::string& path) {
    for (const auto& r : records) {
        if (r.task != task) {
            throw InputError(path + ": record '" + r.id + "' has task " + std::string(task_code(r.task)) +
                             ", expected " + std::string(task_code(task)));
        }
    }
}

struct Evaluation {
    BinaryMetrics metrics;
    std::optional<double> auc_value;
    RocCurve roc;
};

Evaluation evaluate_scores(const std::vector<int>& truth, const std::vector<int>& pred,
                           const std::vector<double>* scores, ScoreDirection direction) {
    Evaluation ev;
    ev.metrics = binary_metrics(confusion_from(truth, pred));
    if (scores) {
        const bool both = std::count(truth.begin(), truth.end(), 1) > 0 && std::count(truth.begin(), truth.end(), 0) > 0;
        if (both) {
            ev.roc = roc_curve(*scores, truth, direction);
            ev.auc_value = auc(ev.roc);
        }
    }
    return ev;
}

void write_metrics_file(const std::string& path, const std::string& method, Task task, const Evaluation& ev) {
    auto out = open_out(path);
    write_metrics_csv_header(out);
    write_metrics_csv_row(out, method, std::string(task_code(task)), ev.metrics,
                          ev.auc_value ? &*ev.auc_value : nullptr);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string kind;
    std::string task;
    std::string train;
    std::string out;
    std::optional<int> layer;
    std::size_t n_train = 0;
    std::string eval_out;
    std::string loss_out;
    bool no_center = false;
    TrainConfig contrastive;
    std::string half_scope = "first";
    std::string optimizer = "adam";
};

void add_contrastive_options(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--margin", a.contrastive.margin, "Contrastive margin m")->capture_default_str();
    cmd->add_option("--epochs", a.contrastive.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", a.contrastive.batch, "Anchors per mini-batch")->capture_default_str();
    cmd->add_option("--step", a.contrastive.step, "Gradient step size")->capture_default_str();
    cmd->add_option("--hidden", a.contrastive.hidden, "Hidden layer width")->capture_default_str();
    cmd->add_option("--out-dim", a.contrastive.out_dim, "Embedding size h")->capture_default_str();
    cmd->add_option("--holdout-frac", a.contrastive.holdout_frac, "Fraction held out for threshold calibration")
        ->capture_default_str();
    cmd->add_option("--half-scope", a.half_scope, "Scope of the 1/2 factor: first|whole")
        ->check(CLI::IsMember({"first", "whole"}))
        ->capture_default_str();
    cmd->add_option("--optimizer", a.optimizer, "adam|sgd")
        ->check(CLI::IsMember({"adam", "sgd"}))
        ->capture_default_str();
    cmd->add_flag("--no-center", a.no_center, "Do not center difference vectors before PCA");
}

AnyChecker train_checker(const TrainArgs& a, const std::vector<RepresentationRecord>& records, std::uint64_t seed,
                         ContrastiveTrainResult* details = nullptr) {
    if (a.kind == "pca") {
        PcaCheckerConfig cfg;
        cfg.center = !a.no_center;
        cfg.seed = seed;
        return train_pca_checker(records, cfg);
    }
    TrainConfig cfg = a.contrastive;
    cfg.seed = seed;
    cfg.half_scope = a.half_scope == "whole" ? HalfScope::WholeSum : HalfScope::FirstTerm;
    cfg.optimizer = parse_optimizer(a.optimizer);
    auto result = train_contrastive(records, cfg);
    AnyChecker checker = result.checker;
    if (details) *details = std::move(result);
    return checker;
}

int cmd_train(Context& c, TrainArgs& a) {
    const Task task = parse_task(a.task);
    auto records = load_nonempty(a.train);
    if (a.layer) {
        std::erase_if(records, [&](const auto& r) { return r.layer != *a.layer; });
        if (records.empty()) throw InputError(a.train + ": no records at layer " + std::to_string(*a.layer));
    }
    require_task(records, task, a.train);

    Manifest m = c.manifest("train");
    m.inputs = {a.train};
    m.outputs = {c.output_path(a.out)};
    std::vector<RepresentationRecord> eval;
    if (a.n_train > 0) {
        std::tie(records, eval) = split_train_eval(records, {a.n_train, c.seed});
    } else if (!a.eval_out.empty()) {
        throw InputError("--eval-out needs --n-train");
    }

    ContrastiveTrainResult details;
    const AnyChecker checker = train_checker(a, records, c.seed, &details);
    save_checker(checker, m.outputs.front());
    if (!a.eval_out.empty()) {
        m.outputs.push_back(c.output_path(a.eval_out));
        save_records(eval, m.outputs.back());
    }
    if (!a.loss_out.empty() && a.kind == "contrastive") {
        m.outputs.push_back(c.output_path(a.loss_out));
        auto out = open_out(m.outputs.back());
        out << "epoch,loss\n";
        for (std::size_t e = 0; e < details.epoch_loss.size(); ++e) {
            out << e + 1 << ',' << csv_number(details.epoch_loss[e]) << '\n';
        }
    }
    write_manifest(m);
    c.out << "trained " << a.kind << " checker for " << a.task << " on " << records.size() << " records -> "
          << m.outputs.front() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checker;
    std::string eval;
    std::string baseline;
    std::string tsf;
    std::string answer;
    std::string items;
    std::string client;
    std::string policy = "negative";
    std::string method;
    std::string out;
    std::string roc;
    std::string points;
};

int eval_checker(Context& c, const EvalArgs& a, Manifest& m) {
    const AnyChecker checker = load_checker(a.checker);
    const auto records = load_nonempty(a.eval);
    const Task task = checker_task(checker);
    for (const auto& r : records) {
        if (r.task != task) {
            throw InputError("task mismatch: checker is for " + std::string(task_code(task)) + " but record '" +
                             r.id + "' is " + std::string(task_code(r.task)));
        }
    }
    m.inputs = {a.checker, a.eval};
    std::vector<int> truth, pred;
    std::vector<double> scores;
    for (const auto& r : records) {
        const Decision d = classify(checker, to_eigen(r.vec));
        truth.push_back(r.label);
        pred.push_back(d.label);
        scores.push_back(d.score);
    }
    const bool is_pca = std::holds_alternative<PcaChecker>(checker);
    const std::string method = !a.method.empty() ? a.method : is_pca ? "rep-pca" : "rep-con";
    const Evaluation ev = evaluate_scores(truth, pred, &scores, ScoreDirection::HigherIsPositive);
    write_metrics_file(m.outputs.front(), method, task, ev);
    if (!a.roc.empty() && ev.auc_value) {
        m.outputs.push_back(c.output_path(a.roc));
        auto out = open_out(m.outputs.back());
        write_roc_csv(out, ev.roc);
    }
    if (!a.points.empty()) {
        m.outputs.push_back(c.output_path(a.points));
        auto out = open_out(m.outputs.back());
        if (is_pca) {
            out << "id,x1,x2,label\n";
            for (const auto& row : export_projection(std::get<PcaChecker>(checker), records)) {
                out << csv_field(row.id) << ',' << csv_number(row.x1) << ',' << csv_number(row.x2) << ',' << row.label
                    << '\n';
            }
        } else {
            out << "id,score,label\n";
            for (const auto& row : export_scores(std::get<ContrastiveChecker>(checker), records)) {
                out << csv_field(row.id) << ',' << csv_number(row.score) << ',' << row.label << '\n';
            }
        }
    }
    c.out << method << ' ' << task_code(task) << " acc=" << csv_number(ev.metrics.acc) << " n=" << records.size()
          << '\n';
    return kExitOk;
}

int eval_baseline(Context& c, const EvalArgs& a, Manifest& m) {
    if (a.tsf.empty() || a.eval.empty()) throw InputError("--baseline needs --tsf and --eval (labels)");
    const IndicatorKind kind = parse_indicator(a.baseline);
    const ProbIndicator indicator = make_indicator(kind);
    const auto labelled = load_nonempty(a.eval);
    const Task task = uniform_task(labelled, a.eval);
    std::map<std::string, int> label_of;
    for (const auto& r : labelled) label_of[r.id] = r.label;
    const auto tsf = load_token_scores(a.tsf);
    if (tsf.empty()) throw InputError(a.tsf + ": file contains no records");
    m.inputs = {a.tsf, a.eval};

    std::vector<double> scores;
    std::vector<int> truth;
    for (const auto& t : tsf) {
        auto it = label_of.find(t.id);
        if (it == label_of.end()) throw InputError("token score record '" + t.id + "' has no label in " + a.eval);
        scores.push_back(indicator_score(t, kind));
        truth.push_back(it->second);
    }
    const SweepResult best = sweep_best_accuracy(scores, truth, indicator);
    const auto pred = threshold_predictions(scores, best.best_threshold, indicator);
    const auto direction = indicator.direction == IndicatorDirection::HigherIsNegative ? ScoreDirection::LowerIsPositive
                                                                                        : ScoreDirection::HigherIsPositive;
    const Evaluation ev = evaluate_scores(truth, pred, &scores, direction);
    const std::string method = !a.method.empty() ? a.method : "prob-" + std::string(indicator_name(kind));
    write_metrics_file(m.outputs.front(), method, task, ev);
    if (!a.roc.empty()) {
        m.outputs.push_back(c.output_path(a.roc));
        auto out = open_out(m.outputs.back());
        write_roc_csv(out, ev.roc);
    }
    if (!a.points.empty()) {
        m.outputs.push_back(c.output_path(a.points));
        auto out = open_out(m.outputs.back());
        out << "id,score,label\n";
        for (std::size_t i = 0; i < tsf.size(); ++i) {
            out << csv_field(tsf[i].id) << ',' << csv_number(scores[i]) << ',' << truth[i] << '\n';
        }
    }
    c.out << method << ' ' << task_code(task) << " best_acc=" << csv_number(best.best_acc)
          << " threshold=" << csv_number(best.best_threshold) << '\n';
    return kExitOk;
}

std::vector<std::pair<CheckItem, int>> load_items(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::vector<std::pair<CheckItem, int>> items;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            CheckItem item;
            item.id = obj.at("id").get<std::string>();
            item.task = parse_task(obj.at("task").get<std::string>());
            item.question = obj.at("question").get<std::string>();
            if (auto it = obj.find("context"); it != obj.end() && !it->is_null()) item.context = it->get<std::string>();
            const int label = obj.at("label").get<int>();
            if (label != 0 && label != 1) throw InputError("label must be 0 or 1");
            items.emplace_back(std::move(item), label);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(n) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (items.empty()) throw InputError(path + ": file contains no items");
    return items;
}

int eval_answer(Context& c, const EvalArgs& a, Manifest& m) {
    if (a.items.empty() || a.client.empty()) throw InputError("--answer needs --items and --client");
    const PromptKind kind = parse_prompt_kind(a.answer);
    const auto policy = a.policy == "exclude" ? UnparseablePolicy::Exclude : UnparseablePolicy::CountNegative;
    const auto items = load_items(a.items);
    const Task task = items.front().first.task;
    for (const auto& [item, label] : items) {
        if (item.task != task) throw InputError(a.items + ": items mix tasks (" + item.id + ")");
    }
    auto client = make_client(a.client);
    m.inputs = {a.items, a.client};

    std::vector<int> truth, pred;
    std::vector<std::tuple<std::string, AnswerCheck, int>> rows;
    for (const auto& [item, label] : items) {
        AnswerCheck check = answer_based_check(kind, item, *client, policy);
        if (check.label) {
            truth.push_back(label);
            pred.push_back(*check.label);
        }
        rows.emplace_back(item.id, std::move(check), label);
    }
    if (truth.empty()) throw ModelError("every response was unparseable and excluded");
    const Evaluation ev = evaluate_scores(truth, pred, nullptr, ScoreDirection::HigherIsPositive);
    const std::string method = !a.method.empty() ? a.method : "ans-" + std::string(prompt_kind_name(kind));
    write_metrics_file(m.outputs.front(), method, task, ev);
    if (!a.points.empty()) {
        m.outputs.push_back(c.output_path(a.points));
        auto out = open_out(m.outputs.back());
        out << "id,parsed,label,response\n";
        for (const auto& [id, check, label] : rows) {
            out << csv_field(id) << ',' << yes_no_name(check.parsed) << ',' << label << ',' << csv_field(check.response)
                << '\n';
        }
    }
    c.out << method << ' ' << task_code(task) << " acc=" << csv_number(ev.metrics.acc) << " n=" << truth.size()
          << '\n';
    return kExitOk;
}

int cmd_eval(Context& c, EvalArgs& a) {
    const int modes = !a.checker.empty() + !a.baseline.empty() + !a.answer.empty();
    if (modes != 1) throw InputError("eval needs exactly one of --checker, --baseline or --answer");
    Manifest m = c.manifest("eval");
    m.outputs = {c.output_path(a.out)};
    int rc;
    if (!a.checker.empty()) {
        if (a.eval.empty()) throw InputError("--checker needs --eval");
        rc = eval_checker(c, a, m);
    } else if (!a.baseline.empty()) {
        rc = eval_baseline(c, a, m);
    } else {
        rc = eval_answer(c, a, m);
    }
    write_manifest(m);
    return rc;
}

// ---------------------------------------------------------------- layer-sweep

struct SweepArgs {
    TrainArgs train;
    std::vector<std::string> inputs;
    std::string out;
};

int cmd_layer_sweep(Context& c, SweepArgs& a) {
    const Task task = parse_task(a.train.task);
    std::vector<std::vector<RepresentationRecord>> layers;
    for (const auto& path : a.inputs) {
        auto records = load_nonempty(path);
        require_task(records, task, path);
        const int layer = records.front().layer;
        for (const auto& r : records) {
            if (r.layer != layer) throw InputError(path + ": records span several layers");
        }
        layers.push_back(std::move(records));
    }
    // Align every layer to the first file's id order.
    const auto& reference = layers.front();
    for (std::size_t f = 1; f < layers.size(); ++f) {
        std::map<std::string, const RepresentationRecord*> by_id;
        for (const auto& r : layers[f]) by_id[r.id] = &r;
        if (by_id.size() != reference.size()) {
            throw InputError("inconsistent ids: " + a.inputs[f] + " and " + a.inputs[0] + " differ in size");
        }
        std::vector<RepresentationRecord> aligned;
        for (const auto& r : reference) {
            auto it = by_id.find(r.id);
            if (it == by_id.end()) throw InputError("inconsistent ids: '" + r.id + "' missing from " + a.inputs[f]);
            if (it->second->label != r.label) throw InputError("inconsistent labels for '" + r.id + "' in " + a.inputs[f]);
            aligned.push_back(*it->second);
        }
        layers[f] = std::move(aligned);
    }

    const auto [train_ref, eval_ref] = split_train_eval(reference, {a.train.n_train, c.seed});
    std::set<std::string> train_ids;
    for (const auto& r : train_ref) train_ids.insert(r.id);

    struct Row {
        int layer;
        Evaluation ev;
        std::size_t n_train, n_eval;
    };
    std::vector<Row> rows;
    for (const auto& records : layers) {
        std::vector<RepresentationRecord> train, eval;
        for (const auto& r : records) (train_ids.count(r.id) ? train : eval).push_back(r);
        const AnyChecker checker = train_checker(a.train, train, c.seed);
        std::vector<int> truth, pred;
        std::vector<double> scores;
        for (const auto& r : eval) {
            const Decision d = classify(checker, to_eigen(r.vec));
            truth.push_back(r.label);
            pred.push_back(d.label);
            scores.push_back(d.score);
        }
        rows.push_back({records.front().layer, evaluate_scores(truth, pred, &scores, ScoreDirection::HigherIsPositive),
                        train.size(), eval.size()});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.layer < y.layer; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].layer == rows[i - 1].layer) throw InputError("layer " + std::to_string(rows[i].layer) + " given twice");
    }

    Manifest m = c.manifest("layer-sweep");
    m.inputs = a.inputs;
    m.outputs = {c.output_path(a.out)};
    auto out = open_out(m.outputs.front());
    out << "layer,acc,precision,recall,f1,auc,n_train,n_eval\n";
    const Row* best = nullptr;
    for (const auto& r : rows) {
        out << r.layer << ',' << csv_number(r.ev.metrics.acc) << ',' << csv_number(r.ev.metrics.precision) << ','
            << csv_number(r.ev.metrics.recall) << ',' << csv_number(r.ev.metrics.f1) << ','
            << (r.ev.auc_value ? csv_number(*r.ev.auc_value) : "") << ',' << r.n_train << ',' << r.n_eval << '\n';
        if (!best || r.ev.metrics.acc > best->ev.metrics.acc) best = &r;
    }
    out.close();
    write_manifest(m);
    c.out << "recommended_layer," << best->layer << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- filter-run

struct FilterArgs {
    std::string queries;
    std::string passages;
    std::string corpus;
    std::string passage_emb;
    std::string query_emb;
    std::vector<std::string> checkers;
    std::string reps;
    std::string client;
    std::string filtering = "on";
    bool no_retrieval = false;
    std::size_t k_retrieve = 10;
    std::size_t k_keep = 2;
    std::string out = "run";
};

int cmd_filter_run(Context& c, FilterArgs& a) {
    RunConfig config;
    config.filtering = parse_filter_mode(a.filtering);
    config.retrieval = !a.no_retrieval;
    config.k_retrieve = a.k_retrieve;
    config.k_keep = a.k_keep;

    Manifest m = c.manifest("filter-run");
    m.inputs = {a.queries};
    const auto queries = load_queries(a.queries);
    if (queries.empty()) throw InputError(a.queries + ": file contains no queries");

    std::map<std::string, PassageRecord> passages;
    auto add_passage = [&](PassageRecord p) {
        const std::string pid = p.pid;
        if (!passages.emplace(pid, std::move(p)).second) throw InputError("duplicate passage id '" + pid + "'");
    };
    if (!a.passages.empty()) {
        m.inputs.push_back(a.passages);
        for (auto& p : load_passages(a.passages)) add_passage(std::move(p));
    }
    if (!a.corpus.empty()) {
        m.inputs.push_back(a.corpus);
        for (const auto& doc : load_corpus(a.corpus)) {
            for (auto& p : segment_corpus(doc)) add_passage(std::move(p));
        }
    }

    RetrievalIndex index;
    std::map<std::string, Vec> query_embeddings;
    if (config.retrieval) {
        if (passages.empty()) throw InputError("filter-run needs --passages and/or --corpus");
        if (a.passage_emb.empty() || a.query_emb.empty()) throw InputError("retrieval needs --passage-emb and --query-emb");
        m.inputs.push_back(a.passage_emb);
        m.inputs.push_back(a.query_emb);
        index = build_index(load_representations(a.passage_emb));
        for (const auto& r : load_representations(a.query_emb)) query_embeddings[r.id] = to_eigen(r.vec);
    }

    std::unique_ptr<CheckerSuite> suite;
    RepresentationProvider reps;
    if (config.retrieval && config.filtering == FilterMode::On) {
        if (a.checkers.size() != 4 || a.reps.empty()) {
            throw InputError("--filtering on needs --checkers t1 t2 t3 t4 and --reps");
        }
        std::array<AnyChecker, 4> loaded{load_checker(a.checkers[0]), load_checker(a.checkers[1]),
                                         load_checker(a.checkers[2]), load_checker(a.checkers[3])};
        m.inputs.insert(m.inputs.end(), a.checkers.begin(), a.checkers.end());
        m.inputs.push_back(a.reps);
        reps = RepresentationProvider(load_representations(a.reps));
        suite = std::make_unique<TrainedCheckers>(std::move(loaded), reps);
    } else if (config.filtering == FilterMode::Oracle) {
        suite = std::make_unique<OracleCheckers>();
    }

    auto client = make_client(a.client);
    m.inputs.push_back(a.client);
    const RunInputs inputs{&queries, &passages, &index, &query_embeddings};
    const RunReport report = evaluate_run(inputs, suite.get(), *client, config);

    const std::string dir = c.output_path((fs::path(a.out) / "report.json").string());
    const fs::path base = fs::path(dir).parent_path();
    m.outputs = {dir, (base / "summary.csv").string(), (base / "distribution.csv").string(),
                 (base / "queries.csv").string()};
    write_json_file(report_to_json(report), m.outputs[0]);
    {
        auto out = open_out(m.outputs[1]);
        write_summary_csv(report, out);
    }
    {
        auto out = open_out(m.outputs[2]);
        write_distribution_csv(report, out);
    }
    {
        auto out = open_out(m.outputs[3]);
        write_queries_csv(report, out);
    }
    write_manifest(m);
    if (report.n_failed) c.err << "warning: " << report.n_failed << " queries failed during generation\n";
    c.out << "noisy_acc=" << csv_number(report.noisy_acc) << " clean_acc=" << csv_number(report.clean_acc)
          << " misleading_before=" << report.distribution_before.misleading
          << " misleading_after=" << report.distribution_after.misleading << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- validate-mislead

struct MisleadArgs {
    std::string input;
    std::string out;
};

int cmd_validate_mislead(Context& c, MisleadArgs& a) {
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw InputError("cannot open '" + a.input + "'");
    Manifest m = c.manifest("validate-mislead");
    m.inputs = {a.input};
    m.outputs = {c.output_path(a.out)};
    std::ostringstream body;
    body << "id,valid\n";
    std::string line;
    std::size_t n = 0, n_valid = 0, n_rows = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            const bool valid = validate_misleading(obj.at("text").get<std::string>(),
                                                   obj.at("wrong_answer").get<std::string>(),
                                                   obj.at("true_answers").get<std::vector<std::string>>());
            body << csv_field(obj.at("id").get<std::string>()) << ',' << (valid ? 1 : 0) << '\n';
            n_valid += valid;
            ++n_rows;
        } catch (const nlohmann::json::exception& e) {
            throw InputError(a.input + ":" + std::to_string(n) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(a.input + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    auto out = open_out(m.outputs.front());
    out << body.str();
    out.close();
    write_manifest(m);
    c.out << n_valid << " of " << n_rows << " passages valid\n";
    return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out = "report.csv";
    std::string runs_out;
    std::string markdown;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    if (line.find('"') != std::string::npos) throw InputError("quoted fields are not supported in metrics files");
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

int cmd_report(Context& c, ReportArgs& a) {
    static const std::vector<std::string> kMetricCols{"method", "task", "acc", "precision", "recall", "f1", "auc"};
    static const std::vector<std::string> kRunCols{"run",          "filtering", "noisy_acc",          "clean_acc",
                                                   "n_noisy",      "n_clean",   "n_failed",           "misleading_before",
                                                   "misleading_after"};
    std::vector<std::vector<std::string>> metric_rows, run_rows;
    for (const auto& path : a.inputs) {
        if (fs::path(path).extension() == ".json") {
            const auto doc = read_json_file(path);
            try {
                auto num = [&](const char* k) { return csv_number(doc.at(k).get<double>()); };
                auto cnt = [&](const char* k) { return std::to_string(doc.at(k).get<std::size_t>()); };
                run_rows.push_back({path, doc.at("config").at("filtering").get<std::string>(), num("noisy_acc"),
                                    num("clean_acc"), cnt("n_noisy"), cnt("n_clean"), cnt("n_failed"),
                                    std::to_string(doc.at("distribution_before").at("misleading").get<std::size_t>()),
                                    std::to_string(doc.at("distribution_after").at("misleading").get<std::size_t>())});
            } catch (const nlohmann::json::exception& e) {
                throw InputError(path + ": not a run report: " + e.what());
            }
            continue;
        }
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line) || split_csv_line(line) != kMetricCols) {
            throw InputError(path + ": expected header " + "method,task,acc,precision,recall,f1,auc");
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto cells = split_csv_line(line);
            if (cells.size() != kMetricCols.size()) throw InputError(path + ": malformed row '" + line + "'");
            metric_rows.push_back(std::move(cells));
        }
    }

    Manifest m = c.manifest("report");
    m.inputs = a.inputs;
    m.outputs = {c.output_path(a.out)};
    auto write_table = [](std::ostream& out, const std::vector<std::string>& cols,
                          const std::vector<std::vector<std::string>>& rows) {
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
        out << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_field(r[i]);
            out << '\n';
        }
    };
    {
        auto out = open_out(m.outputs.front());
        write_table(out, kMetricCols, metric_rows);
    }
    if (!a.runs_out.empty()) {
        m.outputs.push_back(c.output_path(a.runs_out));
        auto out = open_out(m.outputs.back());
        write_table(out, kRunCols, run_rows);
    }
    if (!a.markdown.empty()) {
        m.outputs.push_back(c.output_path(a.markdown));
        auto out = open_out(m.outputs.back());
        auto md_table = [&](const std::vector<std::string>& cols, const std::vector<std::vector<std::string>>& rows) {
            out << '|';
            for (const auto& col : cols) out << ' ' << col << " |";
            out << "\n|";
            for (std::size_t i = 0; i < cols.size(); ++i) out << " --- |";
            out << '\n';
            for (const auto& r : rows) {
                out << '|';
                for (const auto& cell : r) out << ' ' << cell << " |";
                out << '\n';
            }
        };
        out << "# Knowledge checking report\n\n";
        if (!metric_rows.empty()) {
            out << "## Checking metrics\n\n";
            md_table(kMetricCols, metric_rows);
            out << '\n';
        }
        if (!run_rows.empty()) {
            out << "## Filtering runs\n\n";
            md_table(kRunCols, run_rows);
        }
    }
    write_manifest(m);
    c.out << metric_rows.size() << " metric rows, " << run_rows.size() << " runs\n";
    return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthClusterArgs {
    int dim = 64;
    std::size_t n_pos = 600;
    std::size_t n_neg = 600;
    std::vector<double> bayes_acc{0.99};
    std::string task = "t1";
    double auc = 0.65;
    std::size_t tokens = 5;
    std::string out = "synthetic";
};

int cmd_synth_clusters(Context& c, SynthClusterArgs& a) {
    const Task task = parse_task(a.task);
    Manifest m = c.manifest("synth clusters");
    std::vector<RepresentationRecord> first;
    for (std::size_t layer = 0; layer < a.bayes_acc.size(); ++layer) {
        ClusterSpec spec;
        spec.dim = a.dim;
        spec.mu = a.bayes_acc[layer] == 0.5 ? 0.0 : mu_for_bayes_accuracy(a.bayes_acc[layer], a.dim);
        spec.task = task;
        spec.layer = static_cast<int>(layer);
        SplitMix64 rng(c.seed + layer);
        auto records = gaussian_clusters(a.n_pos, a.n_neg, spec, rng);
        const std::string name = a.bayes_acc.size() == 1 ? "reps.rvf" : "layer" + std::to_string(layer) + ".rvf";
        m.outputs.push_back(c.output_path((fs::path(a.out) / name).string()));
        save_records(records, m.outputs.back());
        if (layer == 0) first = std::move(records);
    }
    SplitMix64 rng(c.seed ^ 0x5eedULL);
    m.outputs.push_back(c.output_path((fs::path(a.out) / "scores.tsf").string()));
    save_records(weak_token_scores(first, a.auc, a.tokens, rng), m.outputs.back());
    write_manifest(m);
    c.out << "wrote " << m.outputs.size() << " files to " << fs::path(m.outputs.front()).parent_path().string() << '\n';
    return kExitOk;
}

struct SynthRagArgs {
    RagFixtureSpec spec;
    std::string out = "fixture";
};

int cmd_synth_rag(Context& c, SynthRagArgs& a) {
    a.spec.seed = c.seed;
    Manifest m = c.manifest("synth rag-fixture");
    m.outputs = write_rag_fixture(make_rag_fixture(a.spec), c.output_dir(a.out));
    write_manifest(m);
    c.out << "wrote " << m.outputs.size() << " files\n";
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- entry

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Representation-based knowledge checking toolkit", "kcheck"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", toolkit_version());

    Context ctx{out, err, 0, {}, &app};
    app.add_option("--seed", ctx.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--out-dir", ctx.out_dir, "Directory for relative output paths");
    app.set_config("--config", "", "JSON config file with option values");
    app.config_formatter(std::make_shared<JsonConfig>(&app));

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a pca or contrastive checker");
    train_cmd->add_option("--kind", train.kind, "Checker kind")->required()->check(CLI::IsMember({"pca", "contrastive"}));
    train_cmd->add_option("--task", train.task, "Task code t1..t4")->required();
    train_cmd->add_option("--train", train.train, "Training RVF file")->required();
    train_cmd->add_option("--out", train.out, "Checker JSON output")->required();
    train_cmd->add_option("--layer", train.layer, "Use only records from this layer");
    train_cmd->add_option("--n-train", train.n_train, "Split off this many training samples per class first");
    train_cmd->add_option("--eval-out", train.eval_out, "Write the held-back split here (needs --n-train)");
    train_cmd->add_option("--loss-out", train.loss_out, "Per-epoch loss CSV (contrastive)");
    add_contrastive_options(train_cmd, train);

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checker, probability baseline or answer baseline");
    eval_cmd->add_option("--checker", eval.checker, "Checker JSON");
    eval_cmd->add_option("--eval", eval.eval, "Evaluation RVF (labels for baselines)");
    eval_cmd->add_option("--baseline", eval.baseline, "Probability indicator")
        ->check(CLI::IsMember({"perplexity", "lowest", "average"}));
    eval_cmd->add_option("--tsf", eval.tsf, "Token score file for --baseline");
    eval_cmd->add_option("--answer", eval.answer, "Answer-based prompt style")
        ->check(CLI::IsMember({"direct", "icl", "cot"}));
    eval_cmd->add_option("--items", eval.items, "JSON Lines items {id, task, question, context?, label}");
    eval_cmd->add_option("--client", eval.client, "replay:<file>, echo[:<file>] or http://host:port/path");
    eval_cmd->add_option("--unparseable", eval.policy, "Unparseable answers: negative|exclude")
        ->check(CLI::IsMember({"negative", "exclude"}))
        ->capture_default_str();
    eval_cmd->add_option("--method", eval.method, "Method name in the metrics row");
    eval_cmd->add_option("--out", eval.out, "Metrics CSV output")->required();
    eval_cmd->add_option("--roc", eval.roc, "ROC curve CSV output");
    eval_cmd->add_option("--points", eval.points, "Projection / score / response CSV output");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("layer-sweep", "Train and evaluate one checker per layer");
    sweep_cmd->add_option("--kind", sweep.train.kind, "Checker kind")
        ->required()
        ->check(CLI::IsMember({"pca", "contrastive"}));
    sweep_cmd->add_option("--task", sweep.train.task, "Task code t1..t4")->required();
    sweep_cmd->add_option("--inputs", sweep.inputs, "One RVF file per layer")->required()->expected(1, -1);
    sweep_cmd->add_option("--n-train", sweep.train.n_train, "Training samples per class")->capture_default_str();
    sweep_cmd->add_option("--out", sweep.out, "Per-layer CSV output")->required();
    sweep.train.n_train = 100;
    add_contrastive_options(sweep_cmd, sweep.train);

    FilterArgs filter;
    auto* filter_cmd = app.add_subcommand("filter-run", "Retrieval QA run with context filtering");
    filter_cmd->add_option("--queries", filter.queries, "Query JSON Lines")->required();
    filter_cmd->add_option("--passages", filter.passages, "Passage JSON Lines");
    filter_cmd->add_option("--corpus", filter.corpus, "Corpus JSON Lines {doc_id, text}, segmented into passages");
    filter_cmd->add_option("--passage-emb", filter.passage_emb, "Passage embeddings RVF (id = pid)");
    filter_cmd->add_option("--query-emb", filter.query_emb, "Query embeddings RVF (id = query id)");
    filter_cmd->add_option("--checkers", filter.checkers, "Checker files for t1 t2 t3 t4")->expected(4);
    filter_cmd->add_option("--reps", filter.reps, "Scenario representations RVF");
    filter_cmd->add_option("--client", filter.client, "Generation client")->required();
    filter_cmd->add_option("--filtering", filter.filtering, "on|off|oracle")
        ->check(CLI::IsMember({"on", "off", "oracle"}))
        ->capture_default_str();
    filter_cmd->add_flag("--no-retrieval", filter.no_retrieval, "Answer without any retrieved context");
    filter_cmd->add_option("--k-retrieve", filter.k_retrieve, "Documents retrieved per query")->capture_default_str();
    filter_cmd->add_option("--k-keep", filter.k_keep, "Contexts kept per query")->capture_default_str();
    filter_cmd->add_option("--out", filter.out, "Output directory")->capture_default_str();

    MisleadArgs mislead;
    auto* mislead_cmd = app.add_subcommand("validate-mislead", "Check injected passages against the answer rule");
    mislead_cmd->add_option("--input", mislead.input, "JSON Lines {id, text, wrong_answer, true_answers}")->required();
    mislead_cmd->add_option("--out", mislead.out, "CSV output id,valid")->required();

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "Merge metrics CSVs and run reports");
    report_cmd->add_option("--inputs", report.inputs, "Metrics CSV files and report.json files")
        ->required()
        ->expected(1, -1);
    report_cmd->add_option("--out", report.out, "Merged metrics CSV")->capture_default_str();
    report_cmd->add_option("--runs-out", report.runs_out, "Run summary CSV");
    report_cmd->add_option("--markdown", report.markdown, "Markdown summary");

    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic inputs");
    synth_cmd->require_subcommand(1);
    SynthClusterArgs clusters;
    auto* clusters_cmd = synth_cmd->add_subcommand("clusters", "Gaussian representation clusters and token scores");
    clusters_cmd->add_option("--dim", clusters.dim)->capture_default_str();
    clusters_cmd->add_option("--n-pos", clusters.n_pos)->capture_default_str();
    clusters_cmd->add_option("--n-neg", clusters.n_neg)->capture_default_str();
    clusters_cmd->add_option("--bayes-acc", clusters.bayes_acc, "Bayes accuracy per layer (0.5 = noise)")
        ->expected(1, -1)
        ->capture_default_str();
    clusters_cmd->add_option("--task", clusters.task)->capture_default_str();
    clusters_cmd->add_option("--auc", clusters.auc, "Expected AUC of the token score channel")->capture_default_str();
    clusters_cmd->add_option("--tokens", clusters.tokens)->capture_default_str();
    clusters_cmd->add_option("--out", clusters.out, "Output directory")->capture_default_str();
    SynthRagArgs rag;
    auto* rag_cmd = synth_cmd->add_subcommand("rag-fixture", "Poisoned-corpus QA fixture");
    rag_cmd->add_option("--n-queries", rag.spec.n_queries)->capture_default_str();
    rag_cmd->add_option("--n-train", rag.spec.n_train_per_class)->capture_default_str();
    rag_cmd->add_option("--rep-dim", rag.spec.rep_dim)->capture_default_str();
    rag_cmd->add_option("--embed-dim", rag.spec.embed_dim)->capture_default_str();
    rag_cmd->add_option("--out", rag.out, "Output directory")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*train_cmd) return cmd_train(ctx, train);
        if (*eval_cmd) return cmd_eval(ctx, eval);
        if (*sweep_cmd) return cmd_layer_sweep(ctx, sweep);
        if (*filter_cmd) return cmd_filter_run(ctx, filter);
        if (*mislead_cmd) return cmd_validate_mislead(ctx, mislead);
        if (*report_cmd) return cmd_report(ctx, report);
        if (*clusters_cmd) return cmd_synth_clusters(ctx, clusters);
        if (*rag_cmd) return cmd_synth_rag(ctx, rag);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ModelError& e) {
        err << "error: " << e.what() << '\n';
        return kExitModel;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitModel;
    }
    return kExitInput;
}

}  // namespace kcheck
