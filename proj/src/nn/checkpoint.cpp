#include "viewssl/nn/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "viewssl/tensor_file.hpp"

namespace viewssl::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr int kFormatVersion = 1;
}

void save_checkpoint(const fs::path& dir, const ModelParams<float>& params, const std::string& info_json) {
  fs::create_directories(dir);
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["dense_channels"] = params.dense_channels;
  meta["parameter_count"] = params.parameter_count();
  meta["info"] = json::parse(info_json);
  json names = json::array();
  for (int id = 0; id < kNumParams; ++id) {
    const auto& t = params[id];
    std::vector<std::uint32_t> shape(t.shape.begin(), t.shape.end());
    formats::write_tensor(dir / (std::string(param_name(id)) + ".pft"), formats::TensorData::f32(shape, t.data));
    names.push_back(param_name(id));
  }
  meta["parameters"] = names;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "meta.json").string());
}

ModelParams<float> load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw Error("checkpoint " + dir.string() + " has no meta.json");
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw Error("checkpoint meta.json is not valid JSON: " + std::string(e.what()));
  }
  if (meta.value("format_version", 0) != kFormatVersion) throw Error("unsupported checkpoint format version");
  const int K = meta.at("dense_channels").get<int>();
  ModelParams<float> p = zero_params<float>(K);
  for (int id = 0; id < kNumParams; ++id) {
    const auto t = formats::read_tensor(dir / (std::string(param_name(id)) + ".pft"));
    const std::vector<int> shape(t.shape.begin(), t.shape.end());
    if (t.dtype() != formats::DType::F32 || shape != p[id].shape) {
      throw NnError(NnError::Kind::ShapeError, std::string("checkpoint tensor ") + param_name(id) +
                                                   " does not match the architecture");
    }
    p[id].data = std::get<std::vector<float>>(t.values);
  }
  return p;
}

}  // namespace viewssl::nn
