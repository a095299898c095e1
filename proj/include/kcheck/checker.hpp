#pragma once

// Either trained representation checker behind one interface.

#include <string>
#include <string_view>
#include <variant>

#include "kcheck/contrastive_checker.hpp"
#include "kcheck/decision.hpp"
#include "kcheck/pca_checker.hpp"

namespace kcheck {

using AnyChecker = std::variant<PcaChecker, ContrastiveChecker>;

std::string_view checker_kind(const AnyChecker& checker);  // "pca" | "contrastive"
Task checker_task(const AnyChecker& checker);
int checker_dim(const AnyChecker& checker);

// pca_classify or contrastive_classify; dimension mismatch is an InputError.
Decision classify(const AnyChecker& checker, const Vec& v);

nlohmann::ordered_json checker_to_json(const AnyChecker& checker);
AnyChecker checker_from_json(const nlohmann::ordered_json& doc);  // dispatches on "kind"

AnyChecker load_checker(const std::string& path);
void save_checker(const AnyChecker& checker, const std::string& path);

}  // namespace kcheck
