#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgmgnn/model.hpp"
#include "pgmgnn/oracle.hpp"

namespace pgmgnn {

inline constexpr int kFormatVersion = 1;

struct GroundTruth {
  std::vector<double> marginals_p1;
  std::vector<int> map_state;
  bool operator==(const GroundTruth&) const = default;
};

/// An MRF together with its exact marginals and MAP state.
struct LabeledModel {
  std::string structure;
  BinaryMRF mrf;
  GroundTruth truth;
  bool operator==(const LabeledModel&) const = default;
};

LabeledModel label_with_oracle(std::string structure, BinaryMRF mrf, int enumeration_cap = kDefaultEnumerationCap);

/// Per-structure split sizes. The defaults reproduce 1300 / 260 / 130 models
/// over the 13 classic structures at n = 9.
struct DatasetSpec {
  int n = 9;
  std::vector<ClassicKind> structures = classic_kinds();
  int train_per_structure = 100;
  int val_per_structure = 20;
  int test_per_structure = 10;
  std::uint64_t seed = 0;
  int enumeration_cap = kDefaultEnumerationCap;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<LabeledModel> train;
  std::vector<LabeledModel> validation;
  std::vector<LabeledModel> test;
};

/// Every model is drawn from its own stream derived from
/// (seed, split, structure index, model index).
Dataset generate_dataset(const DatasetSpec& spec);

nlohmann::json model_to_json(const LabeledModel& model);
LabeledModel model_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const nlohmann::json& j);

/// Writes <dir>/manifest.json and one JSON file per model under
/// <dir>/{train,validation,test}/.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// FNV-1a over the serialized models; identifies a corpus in run manifests.
std::string corpus_hash(const std::vector<LabeledModel>& models);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace pgmgnn
