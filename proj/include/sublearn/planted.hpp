#pragma once

#include <string>
#include <vector>

#include "sublearn/setfn.hpp"

namespace sublearn {

enum class PlantedTag {
    Log,
    LogDet,
    FacilityLocation,
    GcutMono,
    LogSqrt,
    LogLogDet,
    GcutNonMono,
    MinBudget
};

PlantedTag planted_tag_from_string(const std::string& s);
std::string to_string(PlantedTag t);

// Ground-truth synthetic set functions. Graph-cut tradeoffs default to 0.1
// (monotone) and 0.8 (non-monotone); min-budget constants derive from the
// table's total mass.
struct PlantedFn {
    PlantedTag tag = PlantedTag::Log;
    double lambda_gc = 0.1;
    double budget_a = 0.0;
    double budget_b = 0.0;
    double budget_r = 0.0;

    static PlantedFn make(PlantedTag tag, const FeatureTable& table);
};

double eval_planted(const PlantedFn& fn, const FeatureTable& table,
                    const ElementSet& s);

// i.i.d. Unif[0,1] entries, reproducible by seed
FeatureTable sample_features(int n, int d, std::uint64_t seed);

struct SetValueInstance {
    ElementSet s;
    double y = 0.0;
};

struct UniverseSubsetInstance {
    ElementSet universe;
    ElementSet subset;
};

// Nested-prefix supervision: shuffle the table once, emit all |V| prefix
// sets, normalize targets by the max over the train fold. fold[i] is 0/1/2
// for train/dev/test; fold sizes differ by at most one.
struct SetValueDataset {
    std::vector<SetValueInstance> instances;
    std::vector<int> fold;
    double norm_const = 1.0;

    std::vector<int> fold_indices(int which) const;
    std::vector<ElementSet> fold_sets(int which) const;
    Vec fold_targets(int which) const;
};

SetValueDataset gen_setvalue_dataset(const PlantedFn& fn,
                                     const FeatureTable& table,
                                     std::uint64_t seed);

// Synthetic (universe, high-value-subset) supervision: each universe is a
// random draw from the table and the subset comes from deterministic greedy
// maximization of the planted function within it.
std::vector<UniverseSubsetInstance> gen_selection_dataset(
    const PlantedFn& fn, const FeatureTable& table, int universe_size,
    int subset_size, int count, std::uint64_t seed);

// greedy argmax of an arbitrary set function, lowest-id tie break
ElementSet greedy_maximize_planted(const PlantedFn& fn, const FeatureTable& table,
                                   const ElementSet& universe, int k);

// dataset files: "id,id,...|value" and "V-ids|Sstar-ids" line formats
void write_setvalue_file(const SetValueDataset& ds, const std::string& path);
SetValueDataset read_setvalue_file(const std::string& path);
void write_fold_file(const SetValueDataset& ds, const std::string& path);
void read_fold_file(SetValueDataset& ds, const std::string& path);
void write_selection_file(const std::vector<UniverseSubsetInstance>& ds,
                          const std::string& path);
std::vector<UniverseSubsetInstance> read_selection_file(const std::string& path);

}  // namespace sublearn
