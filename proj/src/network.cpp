#include "stepbcd/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"

namespace stepbcd {

void NetworkShape::validate() const {
  if (dims.size() < 2) throw std::invalid_argument("network shape needs at least two widths");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("network widths must be positive: " + to_string());
}

NetworkShape NetworkShape::parse(const std::string& text) {
  NetworkShape shape;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad width '" + item + "' in architecture '" + text + "'");
    }
    if (pos != item.size())
      throw std::invalid_argument("bad width '" + item + "' in architecture '" + text + "'");
    shape.dims.push_back(static_cast<std::size_t>(v));
  }
  shape.validate();
  return shape;
}

std::string NetworkShape::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

void Hyperparams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(name) + " must be positive and finite");
  };
  positive(tau, "tau");
  positive(pi, "pi");
  positive(gamma, "gamma");
  positive(beta, "beta");
  positive(eps_tiny, "eps_tiny");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("lambda must be nonnegative and finite");
}

void TrainState::check(const NetworkShape& shape, std::size_t n) const {
  const std::size_t h = shape.layers();
  if (W.size() != h || U.size() != h || V.size() + 1 != h) {
    throw DimensionError("train state has " + std::to_string(W.size()) + " weight blocks, " +
                         std::to_string(U.size()) + " U blocks and " + std::to_string(V.size()) +
                         " V blocks; shape " + shape.to_string() + " needs " + std::to_string(h) +
                         "/" + std::to_string(h) + "/" + std::to_string(h - 1));
  }
  for (std::size_t i = 1; i <= h; ++i) {
    const auto want = std::to_string(shape.dims[i]);
    if (W[i - 1].rows() != shape.dims[i] || W[i - 1].cols() != shape.dims[i - 1])
      throw DimensionError("W" + std::to_string(i) + " is " + shape_string(W[i - 1]) +
                           ", expected " + want + "x" + std::to_string(shape.dims[i - 1]));
    if (U[i - 1].rows() != shape.dims[i] || U[i - 1].cols() != n)
      throw DimensionError("U" + std::to_string(i) + " is " + shape_string(U[i - 1]) +
                           ", expected " + want + "x" + std::to_string(n));
    if (i < h && (V[i - 1].rows() != shape.dims[i] || V[i - 1].cols() != n))
      throw DimensionError("V" + std::to_string(i) + " is " + shape_string(V[i - 1]) +
                           ", expected " + want + "x" + std::to_string(n));
  }
}

TrainState init_gaussian(const NetworkShape& shape, double scale, Rng& rng, const Matrix& inputs) {
  shape.validate();
  if (!(scale > 0.0)) throw std::invalid_argument("init scale must be positive");
  if (inputs.rows() != shape.input_dim())
    throw DimensionError("inputs have " + std::to_string(inputs.rows()) +
                         " rows but the network expects " + std::to_string(shape.input_dim()));
  TrainState state;
  for (std::size_t i = 1; i <= shape.layers(); ++i) {
    Matrix w(shape.dims[i], shape.dims[i - 1]);
    for (double& v : w.data()) v = scale * rng.normal();
    state.W.push_back(std::move(w));
  }
  forward_fill(state, inputs);
  return state;
}

void forward_fill(TrainState& state, const Matrix& inputs) {
  const std::size_t h = state.W.size();
  state.U.resize(h);
  state.V.resize(h - 1);
  const Matrix* prev = &inputs;
  for (std::size_t i = 0; i < h; ++i) {
    state.U[i] = matmul(state.W[i], *prev);
    if (i + 1 < h) {
      state.V[i] = step(state.U[i]);
      prev = &state.V[i];
    }
  }
}

}  // namespace stepbcd
