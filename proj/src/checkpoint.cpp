#include "asr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace asr {

namespace {

void put_le64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string blob_name(const std::string& manifest_path) {
  return std::filesystem::path(manifest_path).filename().string() + ".bin";
}

std::string blob_path(const std::string& manifest_path) {
  return manifest_path + ".bin";
}

}  // namespace

void save_checkpoint(const std::string& manifest_path,
                     const std::vector<NamedTensor>& tensors,
                     const std::vector<double>& loss_curve) {
  nlohmann::json manifest;
  manifest["format"] = "asr-checkpoint-v1";
  manifest["blob"] = blob_name(manifest_path);
  manifest["loss_curve"] = loss_curve;

  std::string blob;
  nlohmann::json list = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& nt : tensors) {
    nlohmann::json entry;
    entry["name"] = nt.name;
    entry["shape"] = nt.tensor.shape();
    entry["byte_offset"] = offset;
    list.push_back(entry);
    for (double v : nt.tensor.data()) put_le64(blob, v);
    offset = blob.size();
  }
  manifest["tensors"] = list;

  std::ofstream mf(manifest_path, std::ios::binary | std::ios::trunc);
  if (!mf) throw std::runtime_error("checkpoint: cannot write " + manifest_path);
  mf << manifest.dump(2) << "\n";
  mf.close();

  std::ofstream bf(blob_path(manifest_path), std::ios::binary | std::ios::trunc);
  if (!bf) throw std::runtime_error("checkpoint: cannot write " + blob_path(manifest_path));
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

std::vector<double> load_checkpoint(const std::string& manifest_path,
                                    std::vector<NamedTensor>& tensors) {
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) throw std::runtime_error("checkpoint: cannot read " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(mf);

  const std::string bpath =
      (std::filesystem::path(manifest_path).parent_path() /
       manifest.at("blob").get<std::string>())
          .string();
  std::ifstream bf(bpath, std::ios::binary);
  if (!bf) throw std::runtime_error("checkpoint: cannot read " + bpath);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                  std::istreambuf_iterator<char>());

  for (auto& nt : tensors) {
    const nlohmann::json* found = nullptr;
    for (const auto& entry : manifest.at("tensors"))
      if (entry.at("name").get<std::string>() == nt.name) {
        found = &entry;
        break;
      }
    if (!found)
      throw std::runtime_error("checkpoint: tensor '" + nt.name + "' missing");
    const auto shape = found->at("shape").get<std::vector<int>>();
    if (shape != nt.tensor.shape())
      throw ShapeError("checkpoint: shape mismatch for '" + nt.name + "'");
    const std::size_t offset = found->at("byte_offset").get<std::size_t>();
    const std::size_t bytes = nt.tensor.size() * 8;
    if (offset + bytes > blob.size())
      throw std::runtime_error("checkpoint: blob truncated for '" + nt.name + "'");
    auto out = nt.tensor.mutable_data();
    for (std::size_t i = 0; i < nt.tensor.size(); ++i)
      out[i] = get_le64(blob.data() + offset + 8 * i);
  }
  return manifest.value("loss_curve", std::vector<double>{});
}

}  // namespace asr
