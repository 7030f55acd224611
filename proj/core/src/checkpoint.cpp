#include "dcpnet/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include "dcpnet/errors.hpp"

namespace dcpnet {

using Json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'D', 'C', 'P', 'N', 'E', 'T', 'C', 'K'};
constexpr int kFormatVersion = 1;

struct Entry {
  std::string name;
  torch::Tensor tensor;
};

void gather(const std::string& prefix, const torch::nn::Module& module, std::vector<Entry>& out) {
  for (const auto& p : module.named_parameters(true)) out.push_back({prefix + p.key(), p.value()});
  for (const auto& b : module.named_buffers(true)) out.push_back({prefix + b.key(), b.value()});
}

std::vector<Entry> state_entries(const ModelState& state) {
  std::vector<Entry> out;
  gather("online.", *state.online, out);
  gather("target.", *state.target, out);
  gather("predictor.", *state.predictor, out);
  gather("classifier.", *state.classifier, out);
  return out;
}

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: throw StateError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType parse_dtype(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  throw StateError("checkpoint: unknown dtype '" + s + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& state, int epoch, const MemoryBank* bank) {
  if (!state.initialized()) throw StateError("save_checkpoint: model is not initialized");
  std::vector<Entry> entries = state_entries(state);
  if (bank != nullptr && bank->size() > 0) {
    entries.push_back({"bank.features", bank->features});
    const auto K = static_cast<std::int64_t>(bank->records.size());
    const auto M = K > 0 ? static_cast<std::int64_t>(bank->records[0].probs.size()) : 0;
    auto probs = torch::zeros({K, M}, torch::kFloat64);
    auto acc = probs.accessor<double, 2>();
    for (std::int64_t i = 0; i < K; ++i) {
      for (std::int64_t j = 0; j < M; ++j) acc[i][j] = bank->records[static_cast<size_t>(i)].probs[static_cast<size_t>(j)];
    }
    entries.push_back({"bank.probs", probs});
  }

  Json header;
  header["format"] = kFormatVersion;
  header["epoch"] = epoch;
  header["model"] = {{"backbone", to_string(state.spec.backbone)},
                     {"feature_dim", state.spec.feature_dim},
                     {"projection_dim", state.spec.projection_dim},
                     {"num_classes", state.num_classes},
                     {"momentum", state.momentum}};
  if (bank != nullptr && bank->size() > 0) header["bank"] = {{"source_epoch", bank->source_epoch}};

  std::vector<torch::Tensor> blobs;
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    auto t = e.tensor.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    tensors.push_back({{"name", e.name}, {"dtype", dtype_name(t.scalar_type())}, {"shape", t.sizes().vec()},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(t);
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : blobs) {
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!out) throw StateError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("checkpoint not found: " + path);
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1ULL << 32)) {
    throw StateError("not a dcpnet checkpoint: " + path);
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto data_start = in.tellg();
  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::exception& e) {
    throw StateError("corrupt checkpoint header in " + path + ": " + e.what());
  }
  if (header.value("format", 0) != kFormatVersion) throw StateError("unsupported checkpoint format in " + path);

  Checkpoint ck;
  try {
    const auto& m = header.at("model");
    EncoderSpec spec;
    spec.backbone = parse_backbone(m.at("backbone").get<std::string>());
    spec.projection_dim = m.at("projection_dim").get<std::int64_t>();
    ck.state = init_model(spec, m.at("num_classes").get<std::int64_t>(), 0, m.at("momentum").get<double>());
    if (ck.state.spec.feature_dim != m.at("feature_dim").get<std::int64_t>()) {
      throw StateError("checkpoint feature_dim does not match the backbone");
    }
    ck.epoch = header.at("epoch").get<int>();

    std::map<std::string, torch::Tensor> loaded;
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
      auto tensor = torch::empty(shape, torch::TensorOptions().dtype(parse_dtype(t.at("dtype").get<std::string>())));
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      if (nbytes != static_cast<std::uint64_t>(tensor.numel()) * tensor.element_size()) {
        throw StateError("checkpoint tensor size mismatch");
      }
      in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
      in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!in) throw StateError("truncated checkpoint " + path);
      loaded.emplace(t.at("name").get<std::string>(), tensor);
    }

    torch::NoGradGuard no_grad;
    for (auto& e : state_entries(ck.state)) {
      auto it = loaded.find(e.name);
      if (it == loaded.end()) throw StateError("checkpoint is missing tensor " + e.name);
      if (it->second.sizes() != e.tensor.sizes() || it->second.scalar_type() != e.tensor.scalar_type()) {
        throw StateError("checkpoint tensor " + e.name + " has the wrong shape");
      }
      e.tensor.copy_(it->second);
    }
    if (header.contains("bank")) {
      MemoryBank bank;
      bank.source_epoch = header.at("bank").at("source_epoch").get<int>();
      bank.features = loaded.at("bank.features");
      auto probs = loaded.at("bank.probs");
      auto acc = probs.accessor<double, 2>();
      for (std::int64_t i = 0; i < probs.size(0); ++i) {
        std::vector<double> row(static_cast<size_t>(probs.size(1)));
        for (std::int64_t j = 0; j < probs.size(1); ++j) row[static_cast<size_t>(j)] = acc[i][j];
        bank.records.push_back(PseudoLabelRecord::from_probs(std::move(row)));
      }
      ck.bank = std::move(bank);
    }
  } catch (const Json::exception& e) {
    throw StateError("corrupt checkpoint " + path + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw StateError("corrupt checkpoint " + path + ": missing bank tensors");
  }
  return ck;
}

}  // namespace dcpnet
