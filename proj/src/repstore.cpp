#include "kcheck/repstore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "kcheck/error.hpp"
#include "kcheck/rng.hpp"

namespace kcheck {

using json = nlohmann::json;

std::string_view task_code(Task task) {
    switch (task) {
        case Task::T1Internal: return "t1";
        case Task::T2InformedHelp: return "t2";
        case Task::T3UninformedHelp: return "t3";
        case Task::T4Contradiction: return "t4";
    }
    return "t1";
}

Task parse_task(std::string_view code) {
    if (code == "t1") return Task::T1Internal;
    if (code == "t2") return Task::T2InformedHelp;
    if (code == "t3") return Task::T3UninformedHelp;
    if (code == "t4") return Task::T4Contradiction;
    throw InputError("unknown task '" + std::string(code) + "' (expected t1|t2|t3|t4)");
}

std::string_view passage_kind_name(PassageKind kind) {
    switch (kind) {
        case PassageKind::Helpful: return "helpful";
        case PassageKind::Unhelpful: return "unhelpful";
        case PassageKind::Misleading: return "misleading";
        case PassageKind::Unknown: return "unknown";
    }
    return "unknown";
}

PassageKind parse_passage_kind(std::string_view name) {
    if (name == "helpful") return PassageKind::Helpful;
    if (name == "unhelpful") return PassageKind::Unhelpful;
    if (name == "misleading") return PassageKind::Misleading;
    if (name == "unknown") return PassageKind::Unknown;
    throw InputError("unknown passage kind '" + std::string(name) + "'");
}

std::string format_double(double value) {
    if (!std::isfinite(value)) throw InputError("cannot serialize non-finite number");
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw InputError("number formatting failed");
    return std::string(buf, end);
}

namespace {

// ---------------------------------------------------------------- writing

std::string quote(const std::string& s) {
    try {
        return json(s).dump();
    } catch (const json::exception& e) {
        throw InputError("unserializable string value: " + std::string(e.what()));
    }
}

void append_doubles(std::string& out, const std::vector<double>& values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    out += ']';
}

void append_strings(std::string& out, const std::vector<std::string>& values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += quote(values[i]);
    }
    out += ']';
}

std::string to_line(const RepresentationRecord& r) {
    std::string s = "{\"id\":" + quote(r.id) + ",\"task\":\"" + std::string(task_code(r.task)) +
                     "\",\"label\":" + std::to_string(r.label) + ",\"model\":" + quote(r.model) +
                     ",\"layer\":" + std::to_string(r.layer) + ",\"dim\":" + std::to_string(r.dim) +
                     ",\"vec\":";
    append_doubles(s, r.vec);
    s += ",\"meta\":{";
    bool first = true;
    for (const auto& [k, v] : r.meta) {
        if (!first) s += ',';
        first = false;
        s += quote(k) + ':' + quote(v);
    }
    s += "}}";
    return s;
}

std::string to_line(const TokenScoreRecord& r) {
    std::string s = "{\"id\":" + quote(r.id) + ",\"tokens\":";
    append_strings(s, r.tokens);
    s += ",\"logprobs\":";
    append_doubles(s, r.logprobs);
    s += '}';
    return s;
}

std::string to_line(const QueryRecord& r) {
    std::string s = "{\"id\":" + quote(r.id) + ",\"question\":" + quote(r.question) + ",\"gold_answers\":";
    append_strings(s, r.gold_answers);
    s += std::string(",\"category\":\"") + (r.category == QueryCategory::Noisy ? "noisy" : "clean") + "\"";
    s += ",\"known_hint\":" + (r.known_hint ? std::to_string(*r.known_hint) : std::string("null"));
    s += '}';
    return s;
}

std::string to_line(const PassageRecord& r) {
    std::string s = "{\"pid\":" + quote(r.pid) + ",\"text\":" + quote(r.text) + ",\"kind\":\"" +
                     std::string(passage_kind_name(r.kind)) + "\",\"retrieval_score\":" +
                     (r.retrieval_score ? format_double(*r.retrieval_score) : std::string("null")) + "}";
    return s;
}

template <typename Record>
void write_lines(const std::vector<Record>& records, std::ostream& out) {
    // Serialize everything first so a bad record leaves the sink untouched.
    std::string buffer;
    for (const auto& r : records) {
        buffer += to_line(r);
        buffer += '\n';
    }
    out << buffer;
    if (!out) throw InputError("write failed");
}

// ---------------------------------------------------------------- reading

class LineError : public InputError {
public:
    LineError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what) {}
};

const json& field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw LineError(line, std::string("missing key '") + key + "'");
    return *it;
}

std::string get_string(const json& obj, const char* key, std::size_t line) {
    const json& v = field(obj, key, line);
    if (!v.is_string()) throw LineError(line, std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

int get_int(const json& obj, const char* key, std::size_t line) {
    const json& v = field(obj, key, line);
    if (!v.is_number_integer()) throw LineError(line, std::string("'") + key + "' must be an integer");
    return v.get<int>();
}

double as_double(const json& v, const char* key, std::size_t line) {
    if (!v.is_number()) throw LineError(line, std::string("'") + key + "' must contain numbers");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw LineError(line, std::string("'") + key + "' contains a non-finite value");
    return d;
}

std::vector<double> get_doubles(const json& obj, const char* key, std::size_t line) {
    const json& v = field(obj, key, line);
    if (!v.is_array()) throw LineError(line, std::string("'") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(as_double(e, key, line));
    return out;
}

std::vector<std::string> get_strings(const json& obj, const char* key, std::size_t line) {
    const json& v = field(obj, key, line);
    if (!v.is_array()) throw LineError(line, std::string("'") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw LineError(line, std::string("'") + key + "' must contain strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

template <typename Parse>
void for_each_object(std::istream& in, Parse&& parse) {
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw LineError(line, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw LineError(line, "expected a JSON object");
        parse(obj, line);
    }
}

void check_unique(std::set<std::string>& seen, const std::string& id, std::size_t line) {
    if (!seen.insert(id).second) throw LineError(line, "duplicate id '" + id + "'");
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return in;
}

}  // namespace

std::vector<RepresentationRecord> read_representations(std::istream& in) {
    std::vector<RepresentationRecord> out;
    std::set<std::string> seen;
    std::map<std::tuple<std::string, int, Task>, int> group_dim;
    for_each_object(in, [&](const json& obj, std::size_t line) {
        RepresentationRecord r;
        r.id = get_string(obj, "id", line);
        try {
            r.task = parse_task(get_string(obj, "task", line));
        } catch (const LineError&) {
            throw;
        } catch (const InputError& e) {
            throw LineError(line, e.what());
        }
        r.label = get_int(obj, "label", line);
        if (r.label != 0 && r.label != 1) throw LineError(line, "label must be 0 or 1");
        r.model = get_string(obj, "model", line);
        r.layer = get_int(obj, "layer", line);
        if (r.layer < 0) throw LineError(line, "layer must be >= 0");
        r.dim = get_int(obj, "dim", line);
        if (r.dim <= 0) throw LineError(line, "dim must be positive");
        r.vec = get_doubles(obj, "vec", line);
        if (r.vec.size() != static_cast<std::size_t>(r.dim)) {
            throw LineError(line, "dim=" + std::to_string(r.dim) + " but vec has " +
                                      std::to_string(r.vec.size()) + " elements");
        }
        if (auto it = obj.find("meta"); it != obj.end() && !it->is_null()) {
            if (!it->is_object()) throw LineError(line, "'meta' must be an object");
            for (const auto& [k, v] : it->items()) {
                if (!v.is_string()) throw LineError(line, "meta value for '" + k + "' must be a string");
                r.meta.emplace(k, v.get<std::string>());
            }
        }
        check_unique(seen, r.id, line);
        auto [g, inserted] = group_dim.emplace(std::make_tuple(r.model, r.layer, r.task), r.dim);
        if (!inserted && g->second != r.dim) {
            throw LineError(line, "dim " + std::to_string(r.dim) + " differs from " + std::to_string(g->second) +
                                      " used earlier in group (model=" + r.model +
                                      ", layer=" + std::to_string(r.layer) + ", task=" +
                                      std::string(task_code(r.task)) + ")");
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<TokenScoreRecord> read_token_scores(std::istream& in) {
    std::vector<TokenScoreRecord> out;
    std::set<std::string> seen;
    for_each_object(in, [&](const json& obj, std::size_t line) {
        TokenScoreRecord r;
        r.id = get_string(obj, "id", line);
        r.tokens = get_strings(obj, "tokens", line);
        r.logprobs = get_doubles(obj, "logprobs", line);
        if (r.tokens.empty()) throw LineError(line, "tokens must be nonempty");
        if (r.tokens.size() != r.logprobs.size()) throw LineError(line, "tokens and logprobs differ in length");
        for (double lp : r.logprobs) {
            if (lp > 0.0) throw LineError(line, "logprob " + format_double(lp) + " > 0");
        }
        check_unique(seen, r.id, line);
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<QueryRecord> read_queries(std::istream& in) {
    std::vector<QueryRecord> out;
    std::set<std::string> seen;
    for_each_object(in, [&](const json& obj, std::size_t line) {
        QueryRecord r;
        r.id = get_string(obj, "id", line);
        r.question = get_string(obj, "question", line);
        r.gold_answers = get_strings(obj, "gold_answers", line);
        if (r.gold_answers.empty()) throw LineError(line, "gold_answers must be nonempty");
        const std::string cat = get_string(obj, "category", line);
        if (cat == "clean") {
            r.category = QueryCategory::Clean;
        } else if (cat == "noisy") {
            r.category = QueryCategory::Noisy;
        } else {
            throw LineError(line, "category must be 'clean' or 'noisy'");
        }
        if (auto it = obj.find("known_hint"); it != obj.end() && !it->is_null()) {
            if (!it->is_number_integer() || (it->get<int>() != 0 && it->get<int>() != 1)) {
                throw LineError(line, "known_hint must be 0, 1 or null");
            }
            r.known_hint = it->get<int>();
        }
        check_unique(seen, r.id, line);
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<PassageRecord> read_passages(std::istream& in) {
    std::vector<PassageRecord> out;
    std::set<std::string> seen;
    for_each_object(in, [&](const json& obj, std::size_t line) {
        PassageRecord r;
        r.pid = get_string(obj, "pid", line);
        r.text = get_string(obj, "text", line);
        if (r.text.empty()) throw LineError(line, "text must be nonempty");
        try {
            r.kind = parse_passage_kind(get_string(obj, "kind", line));
        } catch (const LineError&) {
            throw;
        } catch (const InputError& e) {
            throw LineError(line, e.what());
        }
        if (auto it = obj.find("retrieval_score"); it != obj.end() && !it->is_null()) {
            r.retrieval_score = as_double(*it, "retrieval_score", line);
        }
        check_unique(seen, r.pid, line);
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<CorpusDoc> read_corpus(std::istream& in) {
    std::vector<CorpusDoc> out;
    std::set<std::string> seen;
    for_each_object(in, [&](const json& obj, std::size_t line) {
        CorpusDoc d{get_string(obj, "doc_id", line), get_string(obj, "text", line)};
        check_unique(seen, d.doc_id, line);
        out.push_back(std::move(d));
    });
    return out;
}

void write_records(const std::vector<RepresentationRecord>& records, std::ostream& out) {
    for (const auto& r : records) {
        if (r.vec.size() != static_cast<std::size_t>(r.dim)) {
            throw InputError("record '" + r.id + "': vec length does not match dim");
        }
    }
    write_lines(records, out);
}
void write_records(const std::vector<TokenScoreRecord>& records, std::ostream& out) { write_lines(records, out); }
void write_records(const std::vector<QueryRecord>& records, std::ostream& out) { write_lines(records, out); }
void write_records(const std::vector<PassageRecord>& records, std::ostream& out) { write_lines(records, out); }

std::vector<RepresentationRecord> load_representations(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_representations(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<TokenScoreRecord> load_token_scores(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_token_scores(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<QueryRecord> load_queries(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_queries(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<PassageRecord> load_passages(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_passages(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<CorpusDoc> load_corpus(const std::string& path) {
    auto in = open_input(path);
    try {
        return read_corpus(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

template <typename Record>
void save_records(const std::vector<Record>& records, const std::string& path) {
    std::ostringstream buf;
    write_records(records, buf);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << buf.str();
}

template void save_records(const std::vector<RepresentationRecord>&, const std::string&);
template void save_records(const std::vector<TokenScoreRecord>&, const std::string&);
template void save_records(const std::vector<QueryRecord>&, const std::string&);
template void save_records(const std::vector<PassageRecord>&, const std::string&);

std::pair<std::vector<RepresentationRecord>, std::vector<RepresentationRecord>>
split_train_eval(const std::vector<RepresentationRecord>& records, const SplitSpec& spec) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < records.size(); ++i) (records[i].label == 1 ? pos : neg).push_back(i);
    if (pos.size() < spec.n_train_per_class) {
        throw InputError("positive class has " + std::to_string(pos.size()) + " records, need " +
                         std::to_string(spec.n_train_per_class));
    }
    if (neg.size() < spec.n_train_per_class) {
        throw InputError("negative class has " + std::to_string(neg.size()) + " records, need " +
                         std::to_string(spec.n_train_per_class));
    }
    SplitMix64 rng(spec.seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<bool> in_train(records.size(), false);
    for (std::size_t i = 0; i < spec.n_train_per_class; ++i) {
        in_train[pos[i]] = true;
        in_train[neg[i]] = true;
    }
    std::pair<std::vector<RepresentationRecord>, std::vector<RepresentationRecord>> out;
    for (std::size_t i = 0; i < records.size(); ++i) (in_train[i] ? out.first : out.second).push_back(records[i]);
    return out;
}

}  // namespace kcheck
