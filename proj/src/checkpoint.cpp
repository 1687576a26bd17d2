#include "gabornet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace gabornet {
namespace checkpoint {

namespace {
constexpr char kMagic[8] = {'G', 'N', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_le(std::ofstream& out, T value) {
  // amd64 is little-endian; raw bytes are the documented on-disk format
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError(path + ": truncated checkpoint");
  return value;
}
}  // namespace

void save(const std::string& path, const nn::ParamRegistry& reg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  write_le<uint32_t>(out, static_cast<uint32_t>(reg.entries().size()));
  nlohmann::ordered_json manifest;
  for (const auto& entry : reg.entries()) {
    write_le<uint16_t>(out, static_cast<uint16_t>(entry.path.size()));
    out.write(entry.path.data(),
              static_cast<std::streamsize>(entry.path.size()));
    write_le<uint8_t>(out, static_cast<uint8_t>(entry.value.rank()));
    for (int64_t d : entry.value.shape()) write_le<int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(entry.value.data()),
              static_cast<std::streamsize>(entry.value.numel() * 8));
    manifest[entry.path] = entry.value.shape();
  }
  if (!out) throw DataError("short write to checkpoint " + path);
  std::ofstream mf(path + ".json", std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest " + path + ".json");
  mf << manifest.dump(2) << "\n";
}

void load_into(const std::string& path, const nn::ParamRegistry& reg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(path + ": not a checkpoint file");
  uint32_t count = read_le<uint32_t>(in, path);
  std::map<std::string, std::pair<std::vector<int64_t>, std::vector<double>>>
      stored;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = read_le<uint16_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint8_t rank = read_le<uint8_t>(in, path);
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      shape[d] = read_le<int64_t>(in, path);
      numel *= shape[d];
    }
    std::vector<double> data(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * 8));
    if (!in) throw DataError(path + ": truncated checkpoint");
    stored[name] = {std::move(shape), std::move(data)};
  }
  for (const auto& entry : reg.entries()) {
    auto it = stored.find(entry.path);
    if (it == stored.end())
      throw ContractError("checkpoint " + path + " has no entry for " +
                          entry.path);
    if (it->second.first != entry.value.shape())
      throw ContractError("checkpoint " + path + ": parameter " + entry.path +
                          " has shape " + shape_to_string(it->second.first) +
                          ", model expects " +
                          shape_to_string(entry.value.shape()));
    const_cast<Tensor&>(entry.value).mutable_values() = it->second.second;
    stored.erase(it);
  }
  if (!stored.empty())
    throw ContractError("checkpoint " + path + " carries " +
                        std::to_string(stored.size()) +
                        " entries the model does not declare (first: " +
                        stored.begin()->first + ")");
}

}  // namespace checkpoint
}  // namespace gabornet
