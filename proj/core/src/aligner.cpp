#include "mud/aligner.hpp"

namespace mud {

MatD realify(const VecC& v) {
  MatD m(v.size(), 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    m(i, 0) = v[i].real();
    m(i, 1) = v[i].imag();
  }
  return m;
}

VecC complexify(const MatD& m) {
  require(m.cols() == 2, ErrorKind::Shape, "complexify: expected N x 2");
  VecC v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = cxd(m(i, 0), m(i, 1));
  return v;
}

template <class S>
AlignerModel<S>::AlignerModel(AlignerConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x41c31));
  const int d = cfg_.width;
  // Identity pair: the input projection embeds (re, im) into the first two
  // latent dims and the decoder reads them back, so with the zero noise
  // branch the whole module starts as the identity map.
  inp_ = nn::Linear<S>::create(ps_, "inp", 2, d, rng, nn::Init::Zero);
  ps_.at(inp_.W).value(0, 0) = S(1);
  ps_.at(inp_.W).value(1, 1) = S(1);
  tproj_ = nn::TimestepProj<S>::create(ps_, "tproj", d, rng);
  layers_.reserve(cfg_.depth);
  for (int l = 0; l < cfg_.depth; ++l) {
    Layer lay;
    lay.attn = nn::Mha<S>::create(ps_, "enc" + std::to_string(l) + ".attn", d, cfg_.heads, rng);
    lay.ffn = nn::Mlp<S>::create(ps_, "enc" + std::to_string(l) + ".ffn", d, 4 * d, d, rng);
    layers_.push_back(lay);
  }
  // zero-initialized so the module starts as the identity (up to the decoder)
  noise_ = nn::Linear<S>::create(ps_, "noise_proj", d, d, rng, nn::Init::Zero);
  dec_ = nn::Linear<S>::create(ps_, "dec", d, 2, rng, nn::Init::Zero);
  ps_.at(dec_.W).value(0, 0) = S(1);
  ps_.at(dec_.W).value(1, 1) = S(1);
}

template <class S>
nn::Id<S> AlignerModel<S>::forward(nn::Graph<S>& g, const nn::Binding<S>& bd, nn::Id<S> x_src,
                                   int t_src, int t_dst) const {
  require(t_dst <= t_src, ErrorKind::Usage, "aligner: destination timestep exceeds source");
  require(t_src >= 0 && t_src <= cfg_.T, ErrorKind::Usage, "aligner: source timestep range");
  const int nt = static_cast<int>(g.val(x_src).rows());
  require(nt >= 1 && g.val(x_src).cols() == 2, ErrorKind::Shape, "aligner: expected N_t x 2");

  nn::Id<S> pe = nn::rope_rows(g, inp_.apply(g, bd, x_src));
  nn::Id<S> td = tproj_.apply(g, bd, static_cast<double>(t_dst));
  nn::Id<S> ts = tproj_.apply(g, bd, static_cast<double>(t_src));
  std::vector<nn::Id<S>> seq{pe, td, ts};  // [signal; destination; source]
  nn::Id<S> h = g.concat_rows(seq);
  for (const auto& lay : layers_) {
    h = g.add(h, lay.attn.self(g, bd, g.layernorm_rows(h, S(1e-6))));
    h = g.add(h, lay.ffn.apply(g, bd, g.layernorm_rows(h, S(1e-6))));
  }
  nn::Id<S> pred = noise_.apply(g, bd, g.slice_rows(h, 0, nt));
  return dec_.apply(g, bd, g.sub(pe, pred));
}

template <class S>
VecC AlignerModel<S>::align(const VecC& x_src, int t_src, int t_dst) const {
  nn::Graph<S> g;
  auto bd = nn::bind(g, ps_, false);
  nn::Id<S> x = g.constant(to_scalar<S>(realify(x_src)));
  nn::Id<S> out = forward(g, bd, x, t_src, t_dst);
  return complexify(g.val(out).template cast<double>());
}

template class AlignerModel<float>;
template class AlignerModel<double>;

}  // namespace mud
