#include "immunokit/numcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::nn {

namespace {

void append_le(std::string& out, std::span<const double> values) {
  for (double x : values) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) {
      out.push_back(static_cast<char>(bits & 0xFF));
      bits >>= 8;
    }
  }
}

void read_le(std::string_view in, std::size_t offset, std::span<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(in[offset + i * 8 + static_cast<std::size_t>(b)]);
    }
    values[i] = std::bit_cast<double>(bits);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const AdamConfig& adam, const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["step_count"] = params.step_count();
  manifest["adam"] = {{"learning_rate", adam.learning_rate},
                      {"beta1", adam.beta1},
                      {"beta2", adam.beta2},
                      {"epsilon", adam.epsilon}};
  manifest["metadata"] = metadata;
  manifest["parameters"] = nlohmann::ordered_json::array();
  for (const auto& [name, p] : params) {
    const std::string file = name + ".f64";
    manifest["parameters"].push_back({{"name", name}, {"shape", p.value.shape()}, {"file", file}});
    std::string blob;
    blob.reserve(p.value.size() * 24);
    append_le(blob, p.value.data());
    append_le(blob, p.m.data());
    append_le(blob, p.v.data());
    write_file(dir / file, blob);
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest in " + dir.string() + " is not valid JSON: " +
                          e.what());
  }
  if (manifest.value("format", std::string()) != kCheckpointFormat) {
    throw ValidationError("checkpoint in " + dir.string() + " has unsupported format tag");
  }
  Checkpoint ckpt;
  try {
    const auto& a = manifest.at("adam");
    ckpt.adam = AdamConfig{a.at("learning_rate").get<double>(), a.at("beta1").get<double>(),
                           a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
    ckpt.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& entry : manifest.at("parameters")) {
      const auto name = entry.at("name").get<std::string>();
      Parameter& p = ckpt.params.add(name, entry.at("shape").get<std::vector<std::size_t>>());
      const std::string blob = read_file(dir / entry.at("file").get<std::string>());
      const std::size_t n = p.value.size();
      if (blob.size() != n * 24) {
        throw ValidationError("checkpoint blob for '" + name + "' has " +
                              std::to_string(blob.size()) + " bytes, expected " +
                              std::to_string(n * 24));
      }
      read_le(blob, 0, p.value.data());
      read_le(blob, n * 8, p.m.data());
      read_le(blob, n * 16, p.v.data());
    }
    ckpt.params.set_step_count(manifest.at("step_count").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest in " + dir.string() + " is malformed: " + e.what());
  }
  return ckpt;
}

}  // namespace immunokit::nn
