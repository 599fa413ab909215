#include "core/checkpoint.hpp"

#include <cmath>

#include "core/binary_io.hpp"

namespace augdiff {

namespace {

constexpr char kMagic[] = "AUGD";
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

void write_record(io::Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f64(v);
}

struct Record {
  std::string name;
  Tensor value;
};

Record read_record(io::Reader& r) {
  Record rec;
  const auto name_len = r.u32();
  if (name_len == 0 || name_len > kMaxNameLength) r.corrupt("bad tensor name length " + std::to_string(name_len));
  rec.name = r.raw(name_len);
  const auto rank = r.u32();
  if (rank == 0 || rank > kMaxRank) r.corrupt("tensor '" + rec.name + "' has bad rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.u32();
    if (d == 0) r.corrupt("tensor '" + rec.name + "' has a zero extent");
    count *= d;
    if (count > r.remaining() / 8) r.corrupt("tensor '" + rec.name + "' shape exceeds file size");
  }
  std::vector<double> data(count);
  for (auto& v : data) v = r.f64();
  rec.value = Tensor(std::move(shape), std::move(data));
  return rec;
}

bool strip_suffix(std::string& name, std::string_view suffix) {
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return false;
  }
  name.resize(name.size() - suffix.size());
  return true;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  io::Writer w;
  w.raw(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(store.size() * 4));
  for (const auto& s : store.slots()) write_record(w, s.name, s.value);
  for (const auto& s : store.slots()) {
    write_record(w, s.name + ".m", s.adam_m);
    write_record(w, s.name + ".v", s.adam_v);
    write_record(w, s.name + ".t", Tensor::scalar(static_cast<double>(s.step)));
  }
  w.write_file(path);
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(path);
  if (r.remaining() < 4 || r.raw(4) != std::string(kMagic, 4)) {
    throw Error(ErrorCode::BadMagic, "'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::BadVersion, "'" + path.string() + "' has checkpoint version " + std::to_string(version) +
                                           ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto count = r.u32();
  if (count % 4 != 0) r.corrupt("record count " + std::to_string(count) + " is not a multiple of 4");
  const auto slots = count / 4;

  ParameterStore store;
  for (std::uint32_t i = 0; i < slots; ++i) {
    auto rec = read_record(r);
    if (store.contains(rec.name)) r.corrupt("duplicate tensor '" + rec.name + "'");
    ParameterStore::Slot slot;
    slot.name = std::move(rec.name);
    slot.value = std::move(rec.value);
    store.add_slot(std::move(slot));
  }
  for (std::uint32_t i = 0; i < slots; ++i) {
    auto& slot = store.slots()[i];
    for (const char* suffix : {".m", ".v", ".t"}) {
      auto rec = read_record(r);
      std::string base = rec.name;
      if (!strip_suffix(base, suffix) || base != slot.name) {
        r.corrupt("expected optimizer record '" + slot.name + suffix + "', found '" + rec.name + "'");
      }
      if (suffix[1] == 't') {
        if (rec.value.numel() != 1 || rec.value[0] < 0.0 || rec.value[0] != std::floor(rec.value[0])) {
          r.corrupt("bad step counter for '" + slot.name + "'");
        }
        slot.step = static_cast<std::uint64_t>(rec.value[0]);
        continue;
      }
      if (rec.value.shape() != slot.value.shape()) {
        r.corrupt("optimizer state '" + rec.name + "' shape " + to_string(rec.value.shape()) +
                  " does not match tensor shape " + to_string(slot.value.shape()));
      }
      (suffix[1] == 'm' ? slot.adam_m : slot.adam_v) = std::move(rec.value);
    }
  }
  if (!r.at_end()) r.corrupt(std::to_string(r.remaining()) + " trailing bytes");
  return store;
}

}  // namespace augdiff
