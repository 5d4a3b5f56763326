#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hsc/linalg.hpp"
#include "hsc/rng.hpp"

namespace hsc {

enum class Act : std::uint8_t { Identity = 0, Relu = 1, Sigmoid = 2 };

// Fully-connected layer. Weights are stored input-major (in x out) so a
// batch forward pass is Y = X W + b with X of shape batch x in.
struct Linear {
    Matrix w;
    std::vector<double> b;

    Linear() = default;
    Linear(int in, int out) : w(in, out), b(out, 0.0) {}

    int in() const { return w.rows(); }
    int out() const { return w.cols(); }

    // He-style uniform fan-in initialization.
    void init(Rng& rng) {
        const double limit = std::sqrt(6.0 / std::max(1, in()));
        for (double* p = w.data(); p != w.data() + w.size(); ++p)
            *p = rng.uniform(-limit, limit);
        std::fill(b.begin(), b.end(), 0.0);
    }

    Matrix forward(const Matrix& x) const {
        Matrix y(x.rows(), out());
        gemm(false, false, 1.0, x, w, 0.0, y);
        for (int r = 0; r < y.rows(); ++r)
            for (int c = 0; c < y.cols(); ++c) y(r, c) += b[c];
        return y;
    }
};

struct LinearGrads {
    Matrix dw;
    std::vector<double> db;
};

// dX for a linear layer, accumulating parameter gradients.
Matrix linear_backward(const Linear& layer, const Matrix& x, const Matrix& dy, LinearGrads& g);

void apply_act(Act act, Matrix& m);
// dPre = dPost ⊙ act'(pre), using the post-activation values where cheaper.
void act_backward(Act act, const Matrix& post, Matrix& d);

struct LayerSpec {
    int in = 0;
    int out = 0;
    Act act = Act::Identity;
};

// Plain multilayer perceptron with per-layer activations and hand-written
// backpropagation.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::span<const LayerSpec> specs);

    void init(Rng& rng);

    int input_size() const { return layers.empty() ? 0 : layers.front().in(); }
    int output_size() const { return layers.empty() ? 0 : layers.back().out(); }

    // Activations recorded during a forward pass, for the backward pass.
    struct Tape {
        Matrix input;
        std::vector<Matrix> post; // post-activation output of each layer
    };

    Matrix forward(const Matrix& x, Tape* tape = nullptr) const;

    struct Grads {
        std::vector<LinearGrads> layers;
    };

    Grads zero_grads() const;

    // Returns dInput; accumulates into `grads`.
    Matrix backward(const Tape& tape, const Matrix& d_out, Grads& grads) const;

    std::vector<Linear> layers;
    std::vector<Act> acts;
};

// Flat view over every trainable scalar of a model, in a fixed order.
// Both the optimizer and the checkpoint writer iterate parameters this way.
using ParamVisitor = std::function<void(double* data, std::size_t count)>;

void visit_params(Mlp& m, const ParamVisitor& f);
void visit_params(Linear& l, const ParamVisitor& f);

// Adam with bias correction. State lives in one flat buffer whose layout
// follows the visitation order used at construction.
class Adam {
public:
    Adam() = default;
    explicit Adam(std::size_t param_count, double lr = 1e-3, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // `params` and `grads` must have the same length as param_count.
    void step(std::span<double> params, std::span<const double> grads);

    double lr = 1e-3;

private:
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::vector<double> m_, v_;
    std::int64_t t_ = 0;
};

// Helpers to gather scattered parameters/gradients into contiguous buffers
// for the optimizer.
std::size_t count_params(Mlp& m);
void gather(Mlp& m, std::vector<double>& out);
void scatter(Mlp& m, std::span<const double> in);
void gather_grads(const Mlp::Grads& g, std::vector<double>& out);

class BinWriter;
class BinReader;

// Checkpoint primitives: shape-tagged little-endian weight blocks shared by
// every HSCM file kind.
void write_linear(BinWriter& w, const Linear& l, Act act);
Linear read_linear(BinReader& r, int expect_in, int expect_out, Act expect_act);

} // namespace hsc
