#include "bleg/models/layers.hpp"

namespace bleg::models {

Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

Linear Linear::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias, double stddev) {
  Linear l;
  l.weight = &ps.add(name + ".weight", normal_tensor(rng, in, out, stddev));
  if (with_bias) l.bias = &ps.add(name + ".bias", Tensor::matrix(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = numerics::matmul(x, tape.param(*weight));
  if (bias) y = numerics::add(y, tape.param(*bias));
  return y;
}

BatchNorm BatchNorm::create(ParameterSet& ps, const std::string& name, std::size_t width) {
  BatchNorm bn;
  bn.gamma = &ps.add(name + ".gamma", Tensor::matrix(1, width, 1.0));
  bn.beta = &ps.add(name + ".beta", Tensor::matrix(1, width, 0.0));
  bn.running_mean = &ps.add(name + ".running_mean", Tensor::matrix(1, width, 0.0), Parameter::Kind::buffer);
  bn.running_var = &ps.add(name + ".running_var", Tensor::matrix(1, width, 1.0), Parameter::Kind::buffer);
  return bn;
}

Var BatchNorm::operator()(Tape& tape, Var x, Mode mode) const {
  return numerics::batch_norm(x, tape.param(*gamma), tape.param(*beta), {running_mean, running_var}, mode);
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, std::size_t width) {
  LayerNorm ln;
  ln.gamma = &ps.add(name + ".gamma", Tensor::matrix(1, width, 1.0));
  ln.beta = &ps.add(name + ".beta", Tensor::matrix(1, width, 0.0));
  return ln;
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return numerics::layer_norm_rows(x, tape.param(*gamma), tape.param(*beta));
}

}  // namespace bleg::models
