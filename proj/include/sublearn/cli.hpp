#pragma once

#include <string>

#include "sublearn/fitval.hpp"
#include "sublearn/subsel.hpp"

namespace sublearn::cli {

// exit codes shared by every subcommand
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 2;
inline constexpr int kDivergence = 3;

json default_config();
json load_config(const std::string& path);

// building blocks reused by the python bindings and tests
SetFnModelConfig model_config_from_json(const json& cfg);
SetFnModel build_model(const json& cfg);
RegressionConfig regression_config_from_json(const json& cfg);
SelectionConfig selection_config_from_json(const json& cfg);

std::uint64_t fnv1a_file(const std::string& path);

int run_gen(const json& cfg);
int run_train_regression(const json& cfg);
int run_train_select(const json& cfg);
int run_evaluate(const json& cfg);
int run_audit(const json& cfg);
int run_report(const json& cfg);

}  // namespace sublearn::cli
