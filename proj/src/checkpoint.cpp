#include "nssi/checkpoint.hpp"

#include "nssi/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

namespace nssi {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host order");

namespace {

constexpr char kMagic[8] = {'N', 'S', 'S', 'I', 'C', 'K', 'P', '1'};

template <typename M>
auto sections(M& m) {
  using Set = std::conditional_t<std::is_const_v<M>, const ParamSet*, ParamSet*>;
  return std::vector<std::pair<std::string, Set>>{{"generator", &m.generator.params()},
          {"signal", &m.heads.signal.params()},
          {"gender", &m.heads.gender.params()},
          {"domain", &m.heads.domain.params()},
          {"disease", &m.heads.disease.params()}};
}

}  // namespace

void save_checkpoint(const Model& model, const TrainConfig& train, const json& extra,
                     const std::filesystem::path& path) {
  json registry = json::array();
  for (auto& [section, set] : sections(model)) {
    for (const auto& e : set->entries()) registry.push_back({{"name", section + "/" + e.name}, {"shape", e.value.shape()}});
  }
  const json header = {{"format", "nssinet-checkpoint-1"},
                       {"generator", to_json(model.generator.config())},
                       {"train", to_json(train)},
                       {"extra", extra},
                       {"tensors", registry}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t n = text.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto& [section, set] : sections(model)) {
    for (const auto& e : set->entries()) {
      out.write(reinterpret_cast<const char*>(e.value.data()), static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error(path.string() + ": not a checkpoint");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1ULL << 30)) throw std::runtime_error(path.string() + ": corrupt header length");
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  const json header = json::parse(text);
  const GeneratorConfig gen = generator_config_from_json(header.at("generator"), "checkpoint.generator");
  const TrainConfig train = train_config_from_json(header.at("train"), "checkpoint.train");
  LoadedCheckpoint out{build_model(gen, train, 0), train, header.value("extra", json::object())};

  std::size_t index = 0;
  const json& registry = header.at("tensors");
  for (auto& [section, set] : sections(out.model)) {
    for (auto& e : set->entries()) {
      if (index >= registry.size()) throw std::runtime_error(path.string() + ": registry shorter than the model");
      const json& r = registry[index++];
      const std::string name = section + "/" + e.name;
      if (r.at("name").get<std::string>() != name || r.at("shape").get<Shape>() != e.value.shape()) {
        throw std::runtime_error(path.string() + ": tensor " + std::to_string(index - 1) + " is " +
                                 r.at("name").get<std::string>() + ", expected " + name + " " +
                                 shape_string(e.value.shape()));
      }
      in.read(reinterpret_cast<char*>(e.value.data()), static_cast<std::streamsize>(e.value.size() * sizeof(double)));
      if (!in) throw std::runtime_error(path.string() + ": truncated payload at " + name);
    }
  }
  if (index != registry.size()) throw std::runtime_error(path.string() + ": registry longer than the model");
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return out;
}

}  // namespace nssi
