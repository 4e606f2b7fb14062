#include "tokenwarp/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "tokenwarp/errors.hpp"

namespace tokenwarp {
namespace {

constexpr char kMagic[4] = {'T', 'K', 'W', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated container: missing ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void require_dims(const Tensor& t, std::size_t rank, const char* role) {
  if (t.dims.size() != rank) {
    throw ParameterError(std::string("container holds a rank-") + std::to_string(t.dims.size()) +
                         " tensor, " + role + " needs rank " + std::to_string(rank));
  }
}

int dim(const Tensor& t, std::size_t i) { return static_cast<int>(t.dims[i]); }

}  // namespace

std::uint64_t Tensor::element_count() const noexcept {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_container(const Tensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > kMaxRank) {
    throw ParameterError("encode_container: rank must be 1.." + std::to_string(kMaxRank));
  }
  if (tensor.element_count() != tensor.values.size()) {
    throw ParameterError("encode_container: dims do not match value count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(10 + 8 * tensor.dims.size() + 4 * tensor.values.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kContainerVersion);
  out.push_back(kDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
  for (std::uint64_t d : tensor.dims) put_u64(out, d);
  for (float v : tensor.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    std::string shown;
    for (std::uint8_t b : magic) shown += (b >= 0x20 && b < 0x7f) ? static_cast<char>(b) : '?';
    throw FormatError("bad magic \"" + shown + "\", expected \"TKWP\"", 0);
  }
  const std::uint64_t version_at = r.offset();
  if (const std::uint32_t version = r.u32("version"); version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version), version_at);
  }
  const std::uint64_t dtype_at = r.offset();
  if (const std::uint8_t dtype = r.u8("dtype"); dtype != kDtypeFloat32) {
    throw FormatError("unsupported dtype " + std::to_string(dtype), dtype_at);
  }
  const std::uint64_t rank_at = r.offset();
  const std::uint8_t rank = r.u8("ndim");
  if (rank == 0 || rank > kMaxRank) {
    throw FormatError("unsupported rank " + std::to_string(rank), rank_at);
  }
  Tensor t;
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u64("dims");
    if (d != 0 && count > (std::uint64_t{1} << 40) / d) {
      throw FormatError("tensor too large", r.offset() - 8);
    }
    count *= d;
    t.dims.push_back(d);
  }
  const std::uint64_t payload_at = r.offset();
  if (r.remaining() != count * 4) {
    throw FormatError("payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(count * 4),
                      payload_at);
  }
  const auto payload = r.take(static_cast<std::size_t>(count * 4), "payload");
  t.values.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    t.values[i] = std::bit_cast<float>(bits);
  }
  return t;
}

void write_container(const std::filesystem::path& path, const Tensor& tensor) {
  const std::vector<std::uint8_t> bytes = encode_container(tensor);
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

Tensor read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

Tensor to_tensor(const VideoTensor& video) {
  return Tensor{{static_cast<std::uint64_t>(video.frames()), static_cast<std::uint64_t>(video.height()),
                 static_cast<std::uint64_t>(video.width()), static_cast<std::uint64_t>(video.channels())},
                std::vector<float>(video.values().begin(), video.values().end())};
}

Tensor to_tensor(const TokenGrid& grid) {
  return Tensor{{static_cast<std::uint64_t>(grid.height()), static_cast<std::uint64_t>(grid.width()),
                 static_cast<std::uint64_t>(grid.channels())},
                std::vector<float>(grid.values().begin(), grid.values().end())};
}

Tensor to_tensor(const FlowField& flow) {
  Tensor t{{static_cast<std::uint64_t>(flow.height()), static_cast<std::uint64_t>(flow.width()), 2}, {}};
  t.values.reserve(flow.u_values().size() * 2);
  for (std::size_t i = 0; i < flow.u_values().size(); ++i) {
    t.values.push_back(flow.u_values()[i]);
    t.values.push_back(flow.v_values()[i]);
  }
  return t;
}

Tensor to_tensor(const OcclusionMask& mask) {
  return Tensor{{static_cast<std::uint64_t>(mask.height()), static_cast<std::uint64_t>(mask.width())},
                std::vector<float>(mask.values().begin(), mask.values().end())};
}

Tensor attention_weights_tensor(const AttentionProbe& probe) {
  if (probe.weights.empty()) throw ParameterError("attention probe recorded no weights");
  return Tensor{{static_cast<std::uint64_t>(probe.heads), static_cast<std::uint64_t>(probe.queries),
                 static_cast<std::uint64_t>(probe.keys)},
                probe.weights};
}

VideoTensor as_video(const Tensor& t) {
  require_dims(t, 4, "a video");
  return VideoTensor(dim(t, 0), dim(t, 1), dim(t, 2), dim(t, 3), t.values);
}

TokenGrid as_tokens(const Tensor& t) {
  require_dims(t, 3, "a token grid");
  return TokenGrid(dim(t, 0), dim(t, 1), dim(t, 2), t.values);
}

FlowField as_flow(const Tensor& t) {
  require_dims(t, 3, "a flow field");
  if (t.dims[2] != 2) throw ParameterError("flow container must have 2 components per pixel");
  std::vector<float> u(t.values.size() / 2);
  std::vector<float> v(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = t.values[2 * i];
    v[i] = t.values[2 * i + 1];
  }
  return FlowField(dim(t, 0), dim(t, 1), std::move(u), std::move(v));
}

OcclusionMask as_mask(const Tensor& t) {
  require_dims(t, 2, "an occlusion mask");
  return OcclusionMask(dim(t, 0), dim(t, 1), t.values);
}

}  // namespace tokenwarp
