#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pcrd/networks.hpp"

namespace pcrd {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'R', 'D'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::kIo, "weight archive truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* WeightArchive::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> WeightArchive::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  for (const auto& t : tensors) {
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) fail(ErrorCode::kInvalidInput, "tensor " + t.name + ": dims do not match data size");
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

WeightArchive WeightArchive::deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.str(4) != std::string(kMagic, 4)) fail(ErrorCode::kIo, "not a weight archive (bad magic)");
  const auto version = in.u8();
  if (version != kVersion) fail(ErrorCode::kIo, "unsupported weight archive version " + std::to_string(version));
  WeightArchive archive;
  while (!in.done()) {
    NamedTensor t;
    t.name = in.str(in.u32());
    const auto rank = in.u32();
    if (rank > 8) fail(ErrorCode::kIo, "tensor " + t.name + ": implausible rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims.push_back(in.u32());
      count *= t.dims.back();
    }
    if (count > (std::size_t{1} << 28)) fail(ErrorCode::kIo, "tensor " + t.name + ": implausible size");
    t.data.resize(count);
    for (auto& f : t.data) f = std::bit_cast<float>(in.u32());
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

void WeightArchive::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path);
}

WeightArchive WeightArchive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <typename Params>
WeightArchive to_archive(const Params& p) {
  WeightArchive a;
  p.for_each([&](const std::string& name, const auto& layer) {
    NamedTensor w{name + ".weight",
                  {static_cast<std::uint32_t>(layer.w.rows()), static_cast<std::uint32_t>(layer.w.cols())},
                  {}};
    w.data.reserve(static_cast<std::size_t>(layer.w.size()));
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) w.data.push_back(static_cast<float>(layer.w.data()[i]));
    NamedTensor b{name + ".bias", {static_cast<std::uint32_t>(layer.b.size())}, {}};
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) b.data.push_back(static_cast<float>(layer.b.data()[i]));
    a.tensors.push_back(std::move(w));
    a.tensors.push_back(std::move(b));
  });
  return a;
}

template <typename Params>
void from_archive(const WeightArchive& archive, Params& p) {
  p.for_each([&](const std::string& name, auto& layer) {
    const NamedTensor* w = archive.find(name + ".weight");
    const NamedTensor* b = archive.find(name + ".bias");
    if (!w || !b) fail(ErrorCode::kConfig, "weight archive is missing layer " + name);
    if (w->dims.size() != 2 || w->dims[0] != layer.w.rows() || w->dims[1] != layer.w.cols() ||
        b->dims.size() != 1 || b->dims[0] != layer.b.size()) {
      fail(ErrorCode::kConfig, "weight archive shape mismatch for layer " + name);
    }
    using Scalar = typename std::decay_t<decltype(layer.w)>::Scalar;
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) {
      const float v = w->data[static_cast<std::size_t>(i)];
      if (!std::isfinite(v)) fail(ErrorCode::kConfig, "non-finite weight in " + name);
      layer.w.data()[i] = static_cast<Scalar>(v);
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
      const float v = b->data[static_cast<std::size_t>(i)];
      if (!std::isfinite(v)) fail(ErrorCode::kConfig, "non-finite bias in " + name);
      layer.b.data()[i] = static_cast<Scalar>(v);
    }
  });
}

template WeightArchive to_archive(const ClassifierParams<double>&);
template WeightArchive to_archive(const ClassifierParams<float>&);
template WeightArchive to_archive(const BoxParams<double>&);
template WeightArchive to_archive(const BoxParams<float>&);
template void from_archive(const WeightArchive&, ClassifierParams<double>&);
template void from_archive(const WeightArchive&, ClassifierParams<float>&);
template void from_archive(const WeightArchive&, BoxParams<double>&);
template void from_archive(const WeightArchive&, BoxParams<float>&);

}  // namespace pcrd
