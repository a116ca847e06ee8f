#include "sca_aec/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "sca_aec/config_io.h"
#include "sca_aec/error.h"

namespace sca_aec {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'A', 'E', 'C', 'C', 'K'};

enum EntryKind : std::uint32_t { kParameter = 0, kBuffer = 1, kExtra = 2 };

class Writer {
 public:
  void U32(std::uint32_t v) { Raw(&v, 4); }
  void U64(std::uint64_t v) { Raw(&v, 8); }
  void Str(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Raw(s.data(), s.size());
  }
  void Raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void Entry(EntryKind kind, const std::string& name, const Tensor& t) {
    U32(kind);
    Str(name);
    U32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) U64(d);
    Raw(t.ptr(), t.size() * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}
  void Raw(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) FailData(path_ + ": truncated checkpoint");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t U32() {
    std::uint32_t v;
    Raw(&v, 4);
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v;
    Raw(&v, 8);
    return v;
  }
  std::string Str() {
    const std::uint32_t n = U32();
    if (n > buf_.size() - pos_) FailData(path_ + ": truncated checkpoint");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void SaveCheckpoint(const std::string& path, const ScaCrnModel& model,
                    const CheckpointExtras& extras) {
  ScaCrnModel& m = const_cast<ScaCrnModel&>(model);
  Writer w;
  w.Raw(kMagic, 8);
  w.U32(kCheckpointVersion);
  w.Str(ToJson(model.config()).dump());
  w.Str(extras.metadata.dump());
  const auto params = m.Parameters();
  const auto buffers = m.Buffers();
  w.U32(static_cast<std::uint32_t>(params.size() + buffers.size() + extras.tensors.size()));
  for (const Parameter* p : params) w.Entry(kParameter, p->name, p->value);
  for (const auto& [name, t] : buffers) w.Entry(kBuffer, name, *t);
  for (const NamedTensor& t : extras.tensors) w.Entry(kExtra, t.name, t.value);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) FailData("cannot write checkpoint " + path);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) FailData("short write to checkpoint " + path);
}

std::unique_ptr<ScaCrnModel> LoadCheckpoint(const std::string& path, CheckpointExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) FailData("cannot open checkpoint " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  char magic[8];
  r.Raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) FailData(path + ": not a checkpoint file");
  const std::uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    FailData(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json cfg_json, meta;
  try {
    cfg_json = nlohmann::json::parse(r.Str());
    meta = nlohmann::json::parse(r.Str());
  } catch (const nlohmann::json::exception& e) {
    FailData(path + ": corrupt checkpoint header: " + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfigFromJson(cfg_json);
  } catch (const Error& e) {
    FailData(path + ": invalid stored config: " + e.what());
  }
  auto model = std::make_unique<ScaCrnModel>(cfg);
  std::map<std::string, Tensor*> slots;
  for (Parameter* p : model->Parameters()) slots[p->name] = &p->value;
  for (auto& [name, t] : model->Buffers()) slots[name] = t;
  std::map<std::string, bool> seen;
  if (extras) *extras = CheckpointExtras{meta, {}};

  const std::uint32_t count = r.U32();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t kind = r.U32();
    const std::string name = r.Str();
    const std::uint32_t rank = r.U32();
    if (rank > 8) FailData(path + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.U64();
    Tensor t(shape);
    r.Raw(t.ptr(), t.size() * sizeof(double));
    if (kind == kExtra) {
      if (extras) extras->tensors.push_back({name, std::move(t)});
      continue;
    }
    if (kind != kParameter && kind != kBuffer) FailData(path + ": unknown entry kind for " + name);
    auto it = slots.find(name);
    if (it == slots.end()) FailData(path + ": unexpected entry " + name);
    if (seen[name]) FailData(path + ": duplicate entry " + name);
    if (it->second->shape() != shape) {
      FailData(path + ": " + name + " has shape " + ShapeString(shape) + ", model expects " +
               ShapeString(it->second->shape()));
    }
    *it->second = std::move(t);
    seen[name] = true;
  }
  if (!r.done()) FailData(path + ": trailing bytes in checkpoint");
  for (const auto& [name, slot] : slots) {
    if (!seen[name]) FailData(path + ": missing entry " + name);
  }
  return model;
}

}  // namespace sca_aec
