#include "pgmgnn/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pgmgnn {

using nlohmann::json;

LabeledModel label_with_oracle(std::string structure, BinaryMRF mrf, int enumeration_cap) {
  OracleResult r = enumerate(mrf, enumeration_cap);
  return LabeledModel{std::move(structure), std::move(mrf), GroundTruth{std::move(r.marginals_p1), std::move(r.map_state)}};
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.n > spec.enumeration_cap)
    throw std::runtime_error("generate_dataset: n=" + std::to_string(spec.n) + " exceeds the enumeration cap of " +
                             std::to_string(spec.enumeration_cap));
  if (spec.structures.empty()) throw std::invalid_argument("generate_dataset: no structures");
  if (spec.train_per_structure < 0 || spec.val_per_structure < 0 || spec.test_per_structure < 0)
    throw std::invalid_argument("generate_dataset: negative split size");

  Dataset out;
  out.spec = spec;
  const int counts[3] = {spec.train_per_structure, spec.val_per_structure, spec.test_per_structure};
  std::vector<LabeledModel>* splits[3] = {&out.train, &out.validation, &out.test};
  for (std::uint64_t split = 0; split < 3; ++split) {
    for (std::size_t s = 0; s < spec.structures.size(); ++s) {
      const GraphTopology topo = build_topology(spec.structures[s], spec.n);
      const std::string name = structure_name(spec.structures[s]);
      for (int m = 0; m < counts[split]; ++m) {
        Rng rng(derive_seed(spec.seed, {split, s, static_cast<std::uint64_t>(m)}));
        splits[split]->push_back(label_with_oracle(name, sample_mrf(topo, rng), spec.enumeration_cap));
      }
    }
  }
  return out;
}

json model_to_json(const LabeledModel& model) {
  json edges = json::array();
  for (const auto& e : model.mrf.topology().edges()) edges.push_back({e.u, e.v});
  return json{
      {"format_version", kFormatVersion},
      {"structure", model.structure},
      {"n", model.mrf.num_nodes()},
      {"edges", edges},
      {"J", model.mrf.couplings()},
      {"b", model.mrf.biases()},
      {"truth", {{"marginals_p1", model.truth.marginals_p1}, {"map_state", model.truth.map_state}}},
  };
}

LabeledModel model_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  auto J = j.at("J").get<std::vector<double>>();
  // Files may list edges in any order; align couplings with canonical order.
  GraphTopology topo(n, edges);
  if (J.size() != edges.size()) throw std::invalid_argument("model file: J length does not match edges");
  std::vector<double> aligned(J.size());
  for (std::size_t k = 0; k < edges.size(); ++k) aligned[*topo.edge_index(edges[k].u, edges[k].v)] = J[k];
  LabeledModel m;
  m.structure = j.value("structure", std::string{});
  m.mrf = BinaryMRF(std::move(topo), std::move(aligned), j.at("b").get<std::vector<double>>());
  if (j.contains("truth")) {
    m.truth.marginals_p1 = j.at("truth").at("marginals_p1").get<std::vector<double>>();
    m.truth.map_state = j.at("truth").at("map_state").get<std::vector<int>>();
  }
  return m;
}

json spec_to_json(const DatasetSpec& spec) {
  json names = json::array();
  for (auto k : spec.structures) names.push_back(structure_name(k));
  return json{{"n", spec.n},
              {"structures", names},
              {"train_per_structure", spec.train_per_structure},
              {"val_per_structure", spec.val_per_structure},
              {"test_per_structure", spec.test_per_structure},
              {"seed", spec.seed},
              {"enumeration_cap", spec.enumeration_cap}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec spec;
  spec.n = j.at("n").get<int>();
  spec.structures.clear();
  for (const auto& name : j.at("structures")) {
    auto kind = parse_structure(name.get<std::string>());
    if (!std::holds_alternative<ClassicKind>(kind))
      throw std::invalid_argument("dataset spec: structure '" + name.get<std::string>() + "' is not a classic kind");
    spec.structures.push_back(std::get<ClassicKind>(kind));
  }
  spec.train_per_structure = j.at("train_per_structure").get<int>();
  spec.val_per_structure = j.at("val_per_structure").get<int>();
  spec.test_per_structure = j.at("test_per_structure").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.enumeration_cap = j.value("enumeration_cap", kDefaultEnumerationCap);
  return spec;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return json::parse(in);
}

namespace {

const char* const kSplitNames[3] = {"train", "validation", "test"};

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  const std::vector<LabeledModel>* splits[3] = {&dataset.train, &dataset.validation, &dataset.test};
  json manifest{{"format_version", kFormatVersion}, {"seed", dataset.spec.seed}, {"spec", spec_to_json(dataset.spec)}};
  json paths = json::object();
  for (int s = 0; s < 3; ++s) {
    json list = json::array();
    for (std::size_t m = 0; m < splits[s]->size(); ++m) {
      char name[32];
      std::snprintf(name, sizeof name, "model_%05zu.json", m);
      const std::string rel = std::string(kSplitNames[s]) + "/" + name;
      write_json_file(dir / rel, model_to_json((*splits[s])[m]));
      list.push_back(rel);
    }
    paths[kSplitNames[s]] = list;
  }
  manifest["paths"] = paths;
  write_json_file(dir / "manifest.json", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  Dataset out;
  out.spec = spec_from_json(manifest.at("spec"));
  std::vector<LabeledModel>* splits[3] = {&out.train, &out.validation, &out.test};
  for (int s = 0; s < 3; ++s)
    for (const auto& rel : manifest.at("paths").at(kSplitNames[s]))
      splits[s]->push_back(model_from_json(read_json_file(dir / rel.get<std::string>())));
  return out;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string corpus_hash(const std::vector<LabeledModel>& models) {
  std::string all;
  for (const auto& m : models) all += model_to_json(m).dump();
  return fnv1a_hex(all);
}

}  // namespace pgmgnn
