#include "hsc/nn.hpp"

#include <algorithm>
#include <cmath>

#include "hsc/binio.hpp"

namespace hsc {

Matrix linear_backward(const Linear& layer, const Matrix& x, const Matrix& dy, LinearGrads& g) {
    if (g.dw.rows() != layer.in() || g.dw.cols() != layer.out()) {
        g.dw = Matrix(layer.in(), layer.out());
        g.db.assign(layer.out(), 0.0);
    }
    gemm(true, false, 1.0, x, dy, 1.0, g.dw); // dW += X^T dY
    for (int r = 0; r < dy.rows(); ++r)
        for (int c = 0; c < dy.cols(); ++c) g.db[c] += dy(r, c);
    Matrix dx(x.rows(), layer.in());
    gemm(false, true, 1.0, dy, layer.w, 0.0, dx); // dX = dY W^T
    return dx;
}

void apply_act(Act act, Matrix& m) {
    switch (act) {
    case Act::Identity:
        return;
    case Act::Relu:
        for (double* p = m.data(); p != m.data() + m.size(); ++p)
            if (*p < 0.0) *p = 0.0;
        return;
    case Act::Sigmoid:
        for (double* p = m.data(); p != m.data() + m.size(); ++p)
            *p = 1.0 / (1.0 + std::exp(-*p));
        return;
    }
}

void act_backward(Act act, const Matrix& post, Matrix& d) {
    switch (act) {
    case Act::Identity:
        return;
    case Act::Relu:
        for (std::size_t i = 0; i < d.size(); ++i)
            if (post.data()[i] <= 0.0) d.data()[i] = 0.0;
        return;
    case Act::Sigmoid:
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double s = post.data()[i];
            d.data()[i] *= s * (1.0 - s);
        }
        return;
    }
}

Mlp::Mlp(std::span<const LayerSpec> specs) {
    for (const LayerSpec& s : specs) {
        if (!layers.empty() && layers.back().out() != s.in)
            throw std::invalid_argument("Mlp: layer shapes do not chain");
        layers.emplace_back(s.in, s.out);
        acts.push_back(s.act);
    }
}

void Mlp::init(Rng& rng) {
    for (Linear& l : layers) l.init(rng);
}

Matrix Mlp::forward(const Matrix& x, Tape* tape) const {
    if (!layers.empty() && x.cols() != layers.front().in())
        throw std::invalid_argument("Mlp::forward: input width mismatch");
    if (tape) {
        tape->input = x;
        tape->post.clear();
        tape->post.reserve(layers.size());
    }
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        apply_act(acts[i], h);
        if (tape) tape->post.push_back(h);
    }
    return h;
}

Mlp::Grads Mlp::zero_grads() const {
    Grads g;
    g.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        g.layers[i].dw = Matrix(layers[i].in(), layers[i].out());
        g.layers[i].db.assign(layers[i].out(), 0.0);
    }
    return g;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& d_out, Grads& grads) const {
    if (grads.layers.size() != layers.size())
        throw std::invalid_argument("Mlp::backward: grads not sized (use zero_grads)");
    Matrix d = d_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
        act_backward(acts[i], tape.post[i], d);
        const Matrix& x = (i == 0) ? tape.input : tape.post[i - 1];
        d = linear_backward(layers[i], x, d, grads.layers[i]);
    }
    return d;
}

void visit_params(Linear& l, const ParamVisitor& f) {
    f(l.w.data(), l.w.size());
    f(l.b.data(), l.b.size());
}

void visit_params(Mlp& m, const ParamVisitor& f) {
    for (Linear& l : m.layers) visit_params(l, f);
}

Adam::Adam(std::size_t param_count, double lr_, double beta1, double beta2, double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps), m_(param_count, 0.0), v_(param_count, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("Adam::step: parameter count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

std::size_t count_params(Mlp& m) {
    std::size_t n = 0;
    visit_params(m, [&](double*, std::size_t c) { n += c; });
    return n;
}

void gather(Mlp& m, std::vector<double>& out) {
    out.clear();
    visit_params(m, [&](double* p, std::size_t c) { out.insert(out.end(), p, p + c); });
}

void scatter(Mlp& m, std::span<const double> in) {
    std::size_t pos = 0;
    visit_params(m, [&](double* p, std::size_t c) {
        std::copy(in.begin() + pos, in.begin() + pos + c, p);
        pos += c;
    });
    if (pos != in.size()) throw std::invalid_argument("scatter: length mismatch");
}

void gather_grads(const Mlp::Grads& g, std::vector<double>& out) {
    out.clear();
    for (const LinearGrads& lg : g.layers) {
        out.insert(out.end(), lg.dw.data(), lg.dw.data() + lg.dw.size());
        out.insert(out.end(), lg.db.begin(), lg.db.end());
    }
}

void write_linear(BinWriter& w, const Linear& l, Act act) {
    w.u32(static_cast<std::uint32_t>(l.in()));
    w.u32(static_cast<std::uint32_t>(l.out()));
    w.u8(static_cast<std::uint8_t>(act));
    w.f64_array(l.w.data(), l.w.size());
    w.f64_array(l.b.data(), l.b.size());
}

Linear read_linear(BinReader& r, int expect_in, int expect_out, Act expect_act) {
    const int in = static_cast<int>(r.u32());
    const int out = static_cast<int>(r.u32());
    const Act act = static_cast<Act>(r.u8());
    if (in != expect_in || out != expect_out || act != expect_act)
        throw std::runtime_error("checkpoint: layer shape chain mismatch");
    Linear l(in, out);
    r.f64_array(l.w.data(), l.w.size());
    r.f64_array(l.b.data(), l.b.size());
    for (const double* p = l.w.data(); p != l.w.data() + l.w.size(); ++p)
        if (!std::isfinite(*p)) throw std::runtime_error("checkpoint: non-finite weight");
    return l;
}

} // namespace hsc
