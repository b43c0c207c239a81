#include "mvc3d/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace mvc3d {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint16_t get_u16(std::istream& is) {
  std::uint16_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ostringstream body(std::ios::binary);
  body.write(kMagic, 4);
  put_u16(body, kVersion);

  nlohmann::json j;
  to_json(j, model.config);
  const std::string config = j.dump();  // nlohmann keeps object keys sorted
  put_u32(body, static_cast<std::uint32_t>(config.size()));
  body.write(config.data(), static_cast<std::streamsize>(config.size()));

  const auto params = model.parameters();
  const auto names = model.parameter_names();
  put_u32(body, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_u16(body, static_cast<std::uint16_t>(names[i].size()));
    body.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    write_tensor(body, params[i]);
  }

  const std::string bytes = body.str();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  put_u32(out, crc_of(bytes));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

namespace {

std::string read_body_checked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 4 + sizeof(std::uint32_t))
    throw std::runtime_error("checkpoint: " + path.string() + " is truncated");
  const std::string body = raw.substr(0, raw.size() - sizeof(std::uint32_t));
  std::uint32_t stored;
  std::memcpy(&stored, raw.data() + body.size(), sizeof stored);
  if (crc_of(body) != stored)
    throw std::runtime_error("checkpoint: checksum mismatch in " + path.string());
  return body;
}

}  // namespace

Model load_checkpoint(const std::filesystem::path& path) {
  std::istringstream body(read_body_checked(path), std::ios::binary);
  char magic[4];
  body.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const std::uint16_t version = get_u16(body);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));

  const std::uint32_t config_len = get_u32(body);
  std::string config_text(config_len, '\0');
  body.read(config_text.data(), config_len);
  ModelConfig config;
  from_json(nlohmann::json::parse(config_text), config);
  Model model = build_model(config);

  auto params = model.parameters();
  const auto names = model.parameter_names();
  const std::uint32_t count = get_u32(body);
  if (count != params.size())
    throw std::runtime_error("checkpoint: holds " + std::to_string(count) + " tensors, model has " +
                             std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint16_t name_len = get_u16(body);
    std::string name(name_len, '\0');
    body.read(name.data(), name_len);
    if (name != names[i])
      throw std::runtime_error("checkpoint: tensor '" + name + "' where '" + names[i] +
                               "' was expected");
    Tensor loaded = read_tensor<Real>(body);
    if (loaded.shape() != params[i].shape())
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_str(loaded.shape()) + ", model wants " +
                               shape_str(params[i].shape()));
    std::copy(loaded.values().begin(), loaded.values().end(), params[i].data());
  }
  if (!body) throw std::runtime_error("checkpoint: truncated tensor block in " + path.string());
  return model;
}

std::uint32_t checkpoint_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  in.seekg(-static_cast<std::streamoff>(sizeof(std::uint32_t)), std::ios::end);
  if (!in) throw std::runtime_error("checkpoint: " + path.string() + " is truncated");
  return get_u32(in);
}

}  // namespace mvc3d
