#include "dsg/nn.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace dsg {

ParamTensor& ParamStore::create(const std::string& name, Shape shape) {
  if (find(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  auto p = std::make_unique<ParamTensor>();
  p->name = name;
  p->shape = std::move(shape);
  long n = shape_size(p->shape);
  p->value = Array::Zero(n);
  p->grad = Array::Zero(n);
  p->velocity = Array::Zero(n);
  items_.push_back(std::move(p));
  return *items_.back();
}

ParamTensor& ParamStore::create_uniform(const std::string& name, Shape shape, Rng& rng) {
  if (shape.size() != 2) throw std::invalid_argument("create_uniform: expected rank-2 shape");
  double limit = std::sqrt(6.0 / (shape[0] + shape[1]));
  ParamTensor& p = create(name, std::move(shape));
  for (long i = 0; i < p.size(); ++i) p.value[i] = rng.uniform(-limit, limit);
  return p;
}

ParamTensor* ParamStore::find(const std::string& name) {
  for (auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const ParamTensor* ParamStore::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->grad.setZero();
}

void sgd_step(ParamTensor& p, double lr, double momentum) {
  if (lr < 0.0) throw std::invalid_argument("sgd_step: lr must be >= 0");
  p.velocity = momentum * p.velocity + p.grad;
  p.value -= lr * p.velocity;
}

void sgd_step(ParamStore& store, double lr, double momentum) {
  for (std::size_t i = 0; i < store.count(); ++i) sgd_step(store.at(i), lr, momentum);
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'G', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_params(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(store.count()));
  for (std::size_t i = 0; i < store.count(); ++i) {
    const ParamTensor& p = store.at(i);
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_params(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic bytes in " + path);
  }
  std::uint32_t count = read_u32(is);
  if (count != store.count()) {
    throw std::runtime_error("checkpoint: tensor count mismatch (file has " +
                             std::to_string(count) + ", model expects " +
                             std::to_string(store.count()) + ")");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(is));
    ParamTensor* p = store.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
    if (p->shape != shape) {
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name + "': file " +
                               shape_str(shape) + ", model " + shape_str(p->shape));
    }
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload for tensor '" + name + "'");
    p->grad.setZero();
    p->velocity.setZero();
  }
}

MlpParams make_mlp(ParamStore& store, const std::string& prefix,
                   const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output widths");
  MlpParams mlp;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    MlpLayer layer;
    std::string base = prefix + ".layer" + std::to_string(l);
    layer.weight = &store.create_uniform(base + ".weight", {widths[l], widths[l + 1]}, rng);
    layer.bias = &store.create(base + ".bias", {widths[l + 1]});
    layer.act = (l + 2 < widths.size()) ? Activation::kReLU : Activation::kIdentity;
    mlp.layers.push_back(layer);
  }
  return mlp;
}

Tensor mlp_forward(Graph& g, const MlpParams& mlp, Tensor x) {
  for (const MlpLayer& layer : mlp.layers) {
    x = add_rowvec(matmul(x, g.param(*layer.weight)), g.param(*layer.bias));
    if (layer.act == Activation::kReLU) x = relu(x);
  }
  return x;
}

}  // namespace dsg
