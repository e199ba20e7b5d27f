#include "milattn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "milattn/errors.hpp"

namespace milattn {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'L', 'A', 'T', 'T', 'N', '1'};
constexpr char kAdamTag[8] = {'A', 'D', 'A', 'M', 'S', 'T', 'T', '1'};
constexpr uint32_t kMaxDim = 1u << 28;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedError("checkpoint truncated while reading " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw TruncatedError("checkpoint truncated while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& what) {
  uint64_t bits = get_u64(in, what);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

void put_tensor_body(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
  for (double v : t.data) put_f64(out, v);
}

Tensor get_tensor_body(std::istream& in, const std::string& what) {
  const uint32_t rank = get_u32(in, what + " rank");
  if (rank > 2) throw DimensionError("unsupported tensor rank in " + what);
  std::vector<int> shape;
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(in, what + " dims");
    if (d == 0 || d > kMaxDim) throw DimensionError("dimension out of range in " + what);
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  if (numel > static_cast<int64_t>(kMaxDim))
    throw DimensionError("tensor element count overflows in " + what);
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < numel; ++i) t[i] = get_f64(in, what + " data");
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamSnapshot* optimizer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);

  out.write(kMagic, 8);
  const ModelConfig& c = params.config;
  for (int v : {c.t, c.n, c.n_h, c.d_att1, c.n_det1, c.n_l, c.d_att2, c.n_cls, c.c})
    put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, c.use_attn1 ? 1 : 0);
  put_u32(out, c.use_attn2 ? 1 : 0);

  put_u32(out, static_cast<uint32_t>(params.entries.size()));
  for (const auto& e : params.entries) {
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_tensor_body(out, e.value);
  }

  if (optimizer) {
    out.write(kAdamTag, 8);
    put_u64(out, static_cast<uint64_t>(optimizer->step));
    put_f64(out, optimizer->config.lr);
    put_f64(out, optimizer->config.beta1);
    put_f64(out, optimizer->config.beta2);
    put_f64(out, optimizer->config.eps);
    if (optimizer->m.size() != params.entries.size() ||
        optimizer->v.size() != params.entries.size())
      throw UsageError("optimizer snapshot does not match parameter count");
    for (size_t i = 0; i < params.entries.size(); ++i) {
      put_tensor_body(out, optimizer->m[i]);
      put_tensor_body(out, optimizer->v[i]);
    }
  }
  out.flush();
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  char magic[8];
  if (!in.read(magic, 8)) throw TruncatedError("checkpoint shorter than its magic: " + path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw BadMagicError("bad checkpoint magic in " + path);

  Checkpoint ckpt;
  ModelConfig& c = ckpt.params.config;
  c.t = static_cast<int>(get_u32(in, "config.t"));
  c.n = static_cast<int>(get_u32(in, "config.n"));
  c.n_h = static_cast<int>(get_u32(in, "config.n_h"));
  c.d_att1 = static_cast<int>(get_u32(in, "config.d_att1"));
  c.n_det1 = static_cast<int>(get_u32(in, "config.n_det1"));
  c.n_l = static_cast<int>(get_u32(in, "config.n_l"));
  c.d_att2 = static_cast<int>(get_u32(in, "config.d_att2"));
  c.n_cls = static_cast<int>(get_u32(in, "config.n_cls"));
  c.c = static_cast<int>(get_u32(in, "config.c"));
  c.use_attn1 = get_u32(in, "config.use_attn1") != 0;
  c.use_attn2 = get_u32(in, "config.use_attn2") != 0;
  c.validate();

  const uint32_t count = get_u32(in, "parameter count");
  if (count > 4096) throw DimensionError("implausible parameter count");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(in, "parameter name length");
    if (name_len == 0 || name_len > 256) throw DimensionError("implausible parameter name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw TruncatedError("checkpoint truncated in name");
    Tensor t = get_tensor_body(in, "parameter " + name);
    ckpt.params.entries.push_back({std::move(name), std::move(t)});
  }

  // Cross-check stored tensors against the architecture the header declares.
  const std::vector<ParamSpec> expected = param_layout(c);
  if (expected.size() != ckpt.params.entries.size())
    throw DataError("checkpoint parameter count does not match its config");
  for (size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != ckpt.params.entries[i].name)
      throw DataError("unexpected parameter order: found " + ckpt.params.entries[i].name +
                      " where " + expected[i].name + " belongs");
    if (expected[i].shape != ckpt.params.entries[i].value.shape)
      throw DataError("parameter " + ckpt.params.entries[i].name + " has shape " +
                      ckpt.params.entries[i].value.shape_str() + ", config implies " +
                      shape_to_string(expected[i].shape));
  }

  char tag[8];
  in.read(tag, 8);
  if (in.gcount() == 8) {
    if (std::memcmp(tag, kAdamTag, 8) != 0)
      throw DataError("unexpected trailing section in checkpoint: " + path);
    AdamSnapshot snap;
    snap.step = static_cast<int64_t>(get_u64(in, "optimizer step"));
    snap.config.lr = get_f64(in, "optimizer lr");
    snap.config.beta1 = get_f64(in, "optimizer beta1");
    snap.config.beta2 = get_f64(in, "optimizer beta2");
    snap.config.eps = get_f64(in, "optimizer eps");
    for (uint32_t i = 0; i < count; ++i) {
      snap.m.push_back(get_tensor_body(in, "optimizer first moment"));
      snap.v.push_back(get_tensor_body(in, "optimizer second moment"));
    }
    ckpt.optimizer = std::move(snap);
    if (in.peek() != std::char_traits<char>::eof())
      throw DataError("unexpected trailing bytes in checkpoint: " + path);
  } else if (in.gcount() != 0) {
    throw DataError("unexpected trailing bytes in checkpoint: " + path);
  }
  return ckpt;
}

}  // namespace milattn
