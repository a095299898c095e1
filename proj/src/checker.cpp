#include "kcheck/checker.hpp"

#include "kcheck/error.hpp"
#include "kcheck/json_util.hpp"

namespace kcheck {

std::string_view checker_kind(const AnyChecker& checker) {
    return std::holds_alternative<PcaChecker>(checker) ? "pca" : "contrastive";
}

Task checker_task(const AnyChecker& checker) {
    return std::visit([](const auto& c) { return c.task; }, checker);
}

int checker_dim(const AnyChecker& checker) {
    return std::visit([](const auto& c) { return c.dim(); }, checker);
}

Decision classify(const AnyChecker& checker, const Vec& v) {
    if (v.size() != checker_dim(checker)) {
        throw InputError("vector length " + std::to_string(v.size()) + " does not match checker dimension " +
                         std::to_string(checker_dim(checker)));
    }
    if (const auto* pca = std::get_if<PcaChecker>(&checker)) return pca_classify(*pca, v);
    return contrastive_classify(std::get<ContrastiveChecker>(checker), v);
}

nlohmann::ordered_json checker_to_json(const AnyChecker& checker) {
    return std::visit([](const auto& c) { return to_json(c); }, checker);
}

AnyChecker checker_from_json(const nlohmann::ordered_json& doc) {
    if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string()) {
        throw InputError("checker file has no \"kind\" field");
    }
    const auto kind = doc["kind"].get<std::string>();
    if (kind == "pca") return pca_checker_from_json(doc);
    if (kind == "contrastive") return contrastive_checker_from_json(doc);
    throw InputError("unknown checker kind '" + kind + "'");
}

AnyChecker load_checker(const std::string& path) {
    try {
        return checker_from_json(read_json_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

void save_checker(const AnyChecker& checker, const std::string& path) { write_json_file(checker_to_json(checker), path); }

}  // namespace kcheck
