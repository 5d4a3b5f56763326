#include "hsc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "hsc/binio.hpp"

namespace hsc {

std::vector<double> complex_to_reals(std::span<const cdouble> z) {
    std::vector<double> v;
    v.reserve(z.size() * 2);
    for (const cdouble c : z) {
        v.push_back(c.real());
        v.push_back(c.imag());
    }
    return v;
}

std::vector<cdouble> reals_to_complex(std::span<const double> v) {
    if (v.size() % 2 != 0)
        throw std::invalid_argument("reals_to_complex: odd element count");
    std::vector<cdouble> z;
    z.reserve(v.size() / 2);
    for (std::size_t i = 0; i < v.size(); i += 2) z.emplace_back(v[i], v[i + 1]);
    return z;
}

std::vector<cdouble> reparameterize(const EncoderOutput& out, std::span<const cdouble> eps) {
    if (out.mean.size() != out.scale.size() || out.mean.size() != eps.size())
        throw std::invalid_argument("reparameterize: dimension mismatch");
    std::vector<cdouble> z(out.mean.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = out.mean[i] + eps[i] * out.scale[i];
    return z;
}

std::vector<cdouble> reparameterize(const EncoderOutput& out, cdouble eps) {
    if (out.mean.size() != out.scale.size())
        throw std::invalid_argument("reparameterize: dimension mismatch");
    std::vector<cdouble> z(out.mean.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = out.mean[i] + eps * out.scale[i];
    return z;
}

SemanticSignal power_normalize(std::span<const cdouble> raw, double P) {
    if (P <= 0.0) throw std::invalid_argument("power_normalize: P must be positive");
    double nsq = 0.0;
    for (const cdouble c : raw) nsq += std::norm(c);
    if (nsq <= 0.0) throw std::invalid_argument("power_normalize: zero vector");
    const double scale = std::sqrt(static_cast<double>(raw.size()) * P / nsq);
    SemanticSignal s;
    s.symbols.reserve(raw.size());
    for (const cdouble c : raw) s.symbols.push_back(c * scale);
    return s;
}

VqResult vq_quantize(std::span<const cdouble> raw, const Codebook& book) {
    if (book.size() == 0) throw std::invalid_argument("vq_quantize: empty codebook");
    if (static_cast<int>(raw.size()) * 2 != book.dim())
        throw std::invalid_argument("vq_quantize: dimension mismatch");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < book.size(); ++i) {
        double dist = 0.0;
        for (std::size_t c = 0; c < raw.size(); ++c) {
            const double dre = raw[c].real() - book.entries(i, static_cast<int>(2 * c));
            const double dim = raw[c].imag() - book.entries(i, static_cast<int>(2 * c + 1));
            dist += dre * dre + dim * dim;
        }
        if (dist < best_d) {
            best_d = dist;
            best = i;
        }
    }
    VqResult r;
    r.index = best;
    r.codeword = reals_to_complex(book.entries.row(best));
    return r;
}

SemanticCodec SemanticCodec::create(const CodecSpec& spec, CodecVariant variant, Rng& rng) {
    if (spec.L < 1 || spec.k < 1 || spec.hidden.empty())
        throw std::invalid_argument("SemanticCodec: bad spec");

    SemanticCodec c;
    c.spec = spec;
    c.variant = variant;

    const int in = spec.L * spec.L;
    const int latent = 2 * spec.k;

    std::vector<LayerSpec> enc;
    int prev = in;
    for (const int h : spec.hidden) {
        enc.push_back({prev, h, Act::Relu});
        prev = h;
    }
    c.encoder_trunk = Mlp(enc);
    c.mean_head = Linear(prev, latent);
    if (variant == CodecVariant::Vae) c.logvar_head = Linear(prev, latent);

    std::vector<LayerSpec> dec;
    prev = latent;
    for (auto it = spec.hidden.rbegin(); it != spec.hidden.rend(); ++it) {
        dec.push_back({prev, *it, Act::Relu});
        prev = *it;
    }
    dec.push_back({prev, in, Act::Sigmoid});
    c.decoder = Mlp(dec);

    Rng init = rng.stream("codec-init");
    c.encoder_trunk.init(init);
    c.mean_head.init(init);
    if (variant == CodecVariant::Vae) c.logvar_head.init(init);
    c.decoder.init(init);

    if (variant == CodecVariant::VqVae) {
        c.codebook.entries = Matrix(spec.codebook_size, latent);
        const double limit = std::sqrt(6.0 / latent);
        for (double* p = c.codebook.entries.data();
             p != c.codebook.entries.data() + c.codebook.entries.size(); ++p)
            *p = init.uniform(-limit, limit);
    }
    return c;
}

namespace {

Matrix flatten_images(std::span<const Image> imgs, int L) {
    Matrix x(static_cast<int>(imgs.size()), L * L);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].side() != L) throw std::invalid_argument("flatten_images: side mismatch");
        std::memcpy(x.data() + i * static_cast<std::size_t>(L) * L, imgs[i].pixels.data(),
                    sizeof(double) * L * L);
    }
    return x;
}

} // namespace

EncoderOutput SemanticCodec::encode(const Image& image) const {
    if (image.side() != spec.L) throw std::invalid_argument("encode: image side mismatch");
    Matrix x(1, spec.L * spec.L);
    std::memcpy(x.data(), image.pixels.data(), sizeof(double) * x.size());
    const Matrix h = encoder_trunk.forward(x);
    const Matrix m = mean_head.forward(h);

    EncoderOutput out;
    out.mean = reals_to_complex(std::span<const double>(m.data(), m.size()));
    if (variant == CodecVariant::Vae) {
        Matrix lv = logvar_head.forward(h);
        std::vector<double> s(lv.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(0.5 * lv.data()[i]);
        out.scale = reals_to_complex(s);
    } else {
        out.scale.assign(out.mean.size(), cdouble{0.0, 0.0});
    }
    return out;
}

Image SemanticCodec::decode(std::span<const cdouble> received) const {
    if (static_cast<int>(received.size()) != spec.k)
        throw std::invalid_argument("decode: symbol count mismatch");
    const std::vector<double> v = complex_to_reals(received);
    Matrix z(1, 2 * spec.k);
    std::copy(v.begin(), v.end(), z.data());
    const Matrix y = decoder.forward(z);
    Matrix img(spec.L, spec.L);
    std::memcpy(img.data(), y.data(), sizeof(double) * img.size());
    return Image(std::move(img));
}

SemanticSignal SemanticCodec::encode_signal(const Image& image) const {
    const EncoderOutput out = encode(image);
    if (variant == CodecVariant::VqVae) {
        const VqResult q = vq_quantize(out.mean, codebook);
        return power_normalize(q.codeword, spec.P);
    }
    return power_normalize(out.mean, spec.P); // eps = 0 deterministic path
}

Matrix SemanticCodec::encode_mean_batch(const Matrix& x) const {
    const Matrix h = encoder_trunk.forward(x);
    return mean_head.forward(h);
}

Matrix SemanticCodec::decode_batch(const Matrix& z) const { return decoder.forward(z); }

std::size_t SemanticCodec::param_count() const {
    auto& self = const_cast<SemanticCodec&>(*this);
    std::size_t n = 0;
    const ParamVisitor count = [&](double*, std::size_t c) { n += c; };
    visit_params(self.encoder_trunk, count);
    visit_params(self.mean_head, count);
    if (variant == CodecVariant::Vae) visit_params(self.logvar_head, count);
    visit_params(self.decoder, count);
    if (variant == CodecVariant::VqVae) count(self.codebook.entries.data(), self.codebook.entries.size());
    return n;
}

namespace {

void visit_codec(SemanticCodec& c, const ParamVisitor& f) {
    visit_params(c.encoder_trunk, f);
    visit_params(c.mean_head, f);
    if (c.variant == CodecVariant::Vae) visit_params(c.logvar_head, f);
    visit_params(c.decoder, f);
    if (c.variant == CodecVariant::VqVae) f(c.codebook.entries.data(), c.codebook.entries.size());
}

void gather_codec(SemanticCodec& c, std::vector<double>& out) {
    out.clear();
    visit_codec(c, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
}

void scatter_codec(SemanticCodec& c, std::span<const double> in) {
    std::size_t pos = 0;
    visit_codec(c, [&](double* p, std::size_t n) {
        std::copy(in.begin() + pos, in.begin() + pos + n, p);
        pos += n;
    });
    if (pos != in.size()) throw std::invalid_argument("scatter_codec: length mismatch");
}

struct CodecGrads {
    Mlp::Grads trunk;
    LinearGrads mean;
    LinearGrads logvar;
    Mlp::Grads decoder;
    Matrix codebook;

    static CodecGrads zero(const SemanticCodec& c) {
        CodecGrads g;
        g.trunk = c.encoder_trunk.zero_grads();
        g.mean.dw = Matrix(c.mean_head.in(), c.mean_head.out());
        g.mean.db.assign(c.mean_head.out(), 0.0);
        if (c.variant == CodecVariant::Vae) {
            g.logvar.dw = Matrix(c.logvar_head.in(), c.logvar_head.out());
            g.logvar.db.assign(c.logvar_head.out(), 0.0);
        }
        g.decoder = c.decoder.zero_grads();
        if (c.variant == CodecVariant::VqVae)
            g.codebook = Matrix(c.codebook.entries.rows(), c.codebook.entries.cols());
        return g;
    }

    void gather(const SemanticCodec& c, std::vector<double>& out) const {
        out.clear();
        auto push_mlp = [&](const Mlp::Grads& g) {
            for (const LinearGrads& lg : g.layers) {
                out.insert(out.end(), lg.dw.data(), lg.dw.data() + lg.dw.size());
                out.insert(out.end(), lg.db.begin(), lg.db.end());
            }
        };
        push_mlp(trunk);
        out.insert(out.end(), mean.dw.data(), mean.dw.data() + mean.dw.size());
        out.insert(out.end(), mean.db.begin(), mean.db.end());
        if (c.variant == CodecVariant::Vae) {
            out.insert(out.end(), logvar.dw.data(), logvar.dw.data() + logvar.dw.size());
            out.insert(out.end(), logvar.db.begin(), logvar.db.end());
        }
        push_mlp(decoder);
        if (c.variant == CodecVariant::VqVae)
            out.insert(out.end(), codebook.data(), codebook.data() + codebook.size());
    }
};

// Row-wise power normalization forward: Z = sqrt(kP) * U / ||u_i||, with the
// row norms returned for the backward pass.
Matrix normalize_rows(const Matrix& u, double k, double P, std::vector<double>& norms) {
    const double c = std::sqrt(k * P);
    Matrix z = u;
    norms.resize(u.rows());
    for (int i = 0; i < u.rows(); ++i) {
        double nsq = 0.0;
        for (int j = 0; j < u.cols(); ++j) nsq += u(i, j) * u(i, j);
        const double n = std::sqrt(nsq);
        if (n <= 0.0) throw NumericalError("power normalization hit a zero latent vector");
        norms[i] = n;
        const double s = c / n;
        for (int j = 0; j < u.cols(); ++j) z(i, j) *= s;
    }
    return z;
}

// dU given dZ for z = c*u/||u||.
Matrix normalize_rows_backward(const Matrix& u, const Matrix& dz, double k, double P,
                               std::span<const double> norms) {
    const double c = std::sqrt(k * P);
    Matrix du(u.rows(), u.cols());
    for (int i = 0; i < u.rows(); ++i) {
        const double n = norms[i];
        double udz = 0.0;
        for (int j = 0; j < u.cols(); ++j) udz += u(i, j) * dz(i, j);
        const double n2 = n * n;
        for (int j = 0; j < u.cols(); ++j)
            du(i, j) = (c / n) * (dz(i, j) - u(i, j) * udz / n2);
    }
    return du;
}

struct VaeBatchLoss {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

// Full VAE training loss for a batch with a fixed noise draw. When `grads`
// is non-null the analytic parameter gradients are accumulated into it.
// This exact code path is what grad_check differentiates numerically.
VaeBatchLoss vae_loss(const SemanticCodec& codec, const Matrix& x, const Matrix& eps,
                      double beta_kl, bool strict_scalar, CodecGrads* grads) {
    const int batch = x.rows();
    const int latent = 2 * codec.spec.k;
    const int pixels = codec.spec.L * codec.spec.L;

    Mlp::Tape trunk_tape;
    const Matrix h = codec.encoder_trunk.forward(x, &trunk_tape);
    const Matrix m = codec.mean_head.forward(h);
    const Matrix lv = codec.logvar_head.forward(h);

    Matrix s(batch, latent);
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = std::exp(0.5 * lv.data()[i]);

    // z_bar = m + eps (.) s. Per-dimension mode treats every real component
    // independently; strict-scalar mode applies one complex eps per row via
    // complex multiplication.
    Matrix zbar = m;
    if (!strict_scalar) {
        for (std::size_t i = 0; i < zbar.size(); ++i)
            zbar.data()[i] += eps.data()[i] * s.data()[i];
    } else {
        for (int i = 0; i < batch; ++i) {
            const double er = eps(i, 0);
            const double ei = eps(i, 1);
            for (int c = 0; c < latent / 2; ++c) {
                const double sre = s(i, 2 * c);
                const double sim = s(i, 2 * c + 1);
                zbar(i, 2 * c) += er * sre - ei * sim;
                zbar(i, 2 * c + 1) += er * sim + ei * sre;
            }
        }
    }

    std::vector<double> norms;
    const Matrix z = normalize_rows(zbar, codec.spec.k, codec.spec.P, norms);

    Mlp::Tape dec_tape;
    const Matrix xhat = codec.decoder.forward(z, &dec_tape);

    VaeBatchLoss out;
    for (std::size_t i = 0; i < xhat.size(); ++i) {
        const double d = xhat.data()[i] - x.data()[i];
        out.recon += d * d;
    }
    out.recon /= static_cast<double>(batch) * pixels;
    for (std::size_t i = 0; i < m.size(); ++i)
        out.kl += kl_gaussian(m.data()[i], s.data()[i]);
    out.kl /= batch;
    out.total = out.recon + beta_kl * out.kl;

    if (!grads) return out;

    Matrix dxhat(batch, pixels);
    const double rscale = 2.0 / (static_cast<double>(batch) * pixels);
    for (std::size_t i = 0; i < dxhat.size(); ++i)
        dxhat.data()[i] = rscale * (xhat.data()[i] - x.data()[i]);

    const Matrix dz = codec.decoder.backward(dec_tape, dxhat, grads->decoder);
    const Matrix dzbar = normalize_rows_backward(zbar, dz, codec.spec.k, codec.spec.P, norms);

    Matrix dm = dzbar;
    Matrix ds(batch, latent);
    if (!strict_scalar) {
        for (std::size_t i = 0; i < ds.size(); ++i) ds.data()[i] = dzbar.data()[i] * eps.data()[i];
    } else {
        for (int i = 0; i < batch; ++i) {
            const double er = eps(i, 0);
            const double ei = eps(i, 1);
            for (int c = 0; c < latent / 2; ++c) {
                const double dre = dzbar(i, 2 * c);
                const double dim = dzbar(i, 2 * c + 1);
                ds(i, 2 * c) = dre * er + dim * ei;
                ds(i, 2 * c + 1) = -dre * ei + dim * er;
            }
        }
    }

    // KL gradients: d/dm = m, d/dlv = 0.5(s^2 - 1); chain ds -> dlv via
    // ds/dlv = 0.5 s.
    const double kscale = beta_kl / batch;
    Matrix dlv(batch, latent);
    for (std::size_t i = 0; i < dlv.size(); ++i) {
        dm.data()[i] += kscale * m.data()[i];
        const double sv = s.data()[i];
        dlv.data()[i] = ds.data()[i] * 0.5 * sv + kscale * 0.5 * (sv * sv - 1.0);
    }

    Matrix dh = linear_backward(codec.mean_head, h, dm, grads->mean);
    dh += linear_backward(codec.logvar_head, h, dlv, grads->logvar);
    codec.encoder_trunk.backward(trunk_tape, dh, grads->trunk);
    return out;
}

struct VqBatchLoss {
    double recon = 0.0;
    double vq = 0.0; // mean squared quantization error
    double total = 0.0;
    std::vector<int> chosen; // codeword index per row
};

VqBatchLoss vq_loss(const SemanticCodec& codec, const Matrix& x, double commitment,
                    CodecGrads* grads) {
    const int batch = x.rows();
    const int latent = 2 * codec.spec.k;
    const int pixels = codec.spec.L * codec.spec.L;
    const Matrix& book = codec.codebook.entries;

    Mlp::Tape trunk_tape;
    const Matrix h = codec.encoder_trunk.forward(x, &trunk_tape);
    const Matrix ze = codec.mean_head.forward(h);

    VqBatchLoss out;
    out.chosen.resize(batch);
    Matrix zq(batch, latent);
    for (int i = 0; i < batch; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < book.rows(); ++j) {
            double dist = 0.0;
            for (int c = 0; c < latent; ++c) {
                const double d = ze(i, c) - book(j, c);
                dist += d * d;
            }
            if (dist < best_d) {
                best_d = dist;
                best = j;
            }
        }
        out.chosen[i] = best;
        out.vq += best_d;
        for (int c = 0; c < latent; ++c) zq(i, c) = book(best, c);
    }
    out.vq /= batch;

    std::vector<double> norms;
    const Matrix z = normalize_rows(zq, codec.spec.k, codec.spec.P, norms);

    Mlp::Tape dec_tape;
    const Matrix xhat = codec.decoder.forward(z, &dec_tape);

    for (std::size_t i = 0; i < xhat.size(); ++i) {
        const double d = xhat.data()[i] - x.data()[i];
        out.recon += d * d;
    }
    out.recon /= static_cast<double>(batch) * pixels;
    // codebook loss ||sg(ze) - u||^2 and commitment ||ze - sg(u)||^2 share
    // the same value, weighted differently.
    out.total = out.recon + (1.0 + commitment) * out.vq;

    if (!grads) return out;

    Matrix dxhat(batch, pixels);
    const double rscale = 2.0 / (static_cast<double>(batch) * pixels);
    for (std::size_t i = 0; i < dxhat.size(); ++i)
        dxhat.data()[i] = rscale * (xhat.data()[i] - x.data()[i]);

    const Matrix dz = codec.decoder.backward(dec_tape, dxhat, grads->decoder);
    const Matrix dzq = normalize_rows_backward(zq, dz, codec.spec.k, codec.spec.P, norms);

    // Straight-through to the encoder plus the commitment pull; codebook
    // rows move toward the encodings that selected them.
    Matrix dze = dzq;
    const double cscale = 2.0 * commitment / batch;
    const double bscale = 2.0 / batch;
    for (int i = 0; i < batch; ++i) {
        const int j = out.chosen[i];
        for (int c = 0; c < latent; ++c) {
            const double diff = ze(i, c) - book(j, c);
            dze(i, c) += cscale * diff;
            grads->codebook(j, c) += bscale * -diff;
        }
    }

    Matrix dh = linear_backward(codec.mean_head, h, dze, grads->mean);
    codec.encoder_trunk.backward(trunk_tape, dh, grads->trunk);
    return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

} // namespace

TrainResult train_elbo(SemanticCodec& codec, const std::vector<Image>& dataset,
                       const TrainConfig& cfg) {
    if (codec.variant != CodecVariant::Vae)
        throw std::invalid_argument("train_elbo: codec is not the VAE variant");
    if (dataset.empty()) throw std::invalid_argument("train_elbo: empty dataset");

    TrainResult result;
    if (cfg.epochs == 0) return result;

    const Matrix all = flatten_images(dataset, codec.spec.L);
    const int latent = 2 * codec.spec.k;

    std::vector<double> params, gradvec;
    gather_codec(codec, params);
    Adam adam(params.size(), cfg.lr);

    Rng root(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = root.stream(0x1000 + epoch);
        Rng eps_rng = root.stream(0x2000 + epoch);
        const std::vector<std::size_t> order = shuffled_indices(dataset.size(), order_rng);

        EpochStats stats;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const int b = static_cast<int>(stop - start);
            Matrix x(b, all.cols());
            for (int i = 0; i < b; ++i)
                std::memcpy(x.data() + static_cast<std::size_t>(i) * all.cols(),
                            all.data() + order[start + i] * all.cols(), sizeof(double) * all.cols());

            Matrix eps(b, latent);
            if (cfg.strict_scalar_eps) {
                // One CN(0,1) draw per row, stored in the first two columns.
                for (int i = 0; i < b; ++i) {
                    const cdouble e = eps_rng.cnormal(1.0);
                    eps(i, 0) = e.real();
                    eps(i, 1) = e.imag();
                }
            } else {
                for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = eps_rng.normal();
            }

            CodecGrads grads = CodecGrads::zero(codec);
            const VaeBatchLoss loss =
                vae_loss(codec, x, eps, cfg.beta_kl, cfg.strict_scalar_eps, &grads);
            if (!std::isfinite(loss.total))
                throw NumericalError("train_elbo: loss diverged (NaN/inf) at epoch " +
                                     std::to_string(epoch));

            grads.gather(codec, gradvec);
            gather_codec(codec, params);
            adam.step(params, gradvec);
            scatter_codec(codec, params);

            stats.recon += loss.recon;
            stats.kl += loss.kl;
            stats.total += loss.total;
            ++steps;
        }
        stats.recon /= steps;
        stats.kl /= steps;
        stats.total /= steps;
        result.epochs.push_back(stats);
    }
    return result;
}

TrainResult train_vqvae(SemanticCodec& codec, const std::vector<Image>& dataset,
                        const TrainConfig& cfg) {
    if (codec.variant != CodecVariant::VqVae)
        throw std::invalid_argument("train_vqvae: codec is not the VQ-VAE variant");
    if (dataset.empty()) throw std::invalid_argument("train_vqvae: empty dataset");

    TrainResult result;
    if (cfg.epochs == 0) return result;

    const Matrix all = flatten_images(dataset, codec.spec.L);

    std::vector<double> params, gradvec;
    gather_codec(codec, params);
    Adam adam(params.size(), cfg.lr);

    Rng root(cfg.seed);
    std::vector<int> used(codec.codebook.size(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = root.stream(0x1000 + epoch);
        const std::vector<std::size_t> order = shuffled_indices(dataset.size(), order_rng);
        if (epoch == cfg.epochs - 1) std::fill(used.begin(), used.end(), 0);

        EpochStats stats;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const int b = static_cast<int>(stop - start);
            Matrix x(b, all.cols());
            for (int i = 0; i < b; ++i)
                std::memcpy(x.data() + static_cast<std::size_t>(i) * all.cols(),
                            all.data() + order[start + i] * all.cols(), sizeof(double) * all.cols());

            CodecGrads grads = CodecGrads::zero(codec);
            const VqBatchLoss loss = vq_loss(codec, x, cfg.commitment, &grads);
            if (!std::isfinite(loss.total))
                throw NumericalError("train_vqvae: loss diverged (NaN/inf) at epoch " +
                                     std::to_string(epoch));
            if (epoch == cfg.epochs - 1)
                for (const int j : loss.chosen) used[j] = 1;

            grads.gather(codec, gradvec);
            gather_codec(codec, params);
            adam.step(params, gradvec);
            scatter_codec(codec, params);

            stats.recon += loss.recon;
            stats.vq += loss.vq;
            stats.total += loss.total;
            ++steps;
        }
        stats.recon /= steps;
        stats.vq /= steps;
        stats.total /= steps;
        result.epochs.push_back(stats);
    }

    int alive = 0;
    for (const int u : used) alive += u;
    result.dead_codeword_fraction =
        1.0 - static_cast<double>(alive) / static_cast<double>(codec.codebook.size());
    return result;
}

double grad_check(SemanticCodec& codec, const Image& image, std::uint64_t seed) {
    if (codec.variant != CodecVariant::Vae)
        throw std::invalid_argument("grad_check: VAE variant required");

    Matrix x(1, codec.spec.L * codec.spec.L);
    std::memcpy(x.data(), image.pixels.data(), sizeof(double) * x.size());

    Rng rng(seed);
    Matrix eps(1, 2 * codec.spec.k);
    for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();

    const double beta = 1e-3;

    CodecGrads grads = CodecGrads::zero(codec);
    vae_loss(codec, x, eps, beta, false, &grads);
    std::vector<double> analytic;
    grads.gather(codec, analytic);

    std::vector<double> params;
    gather_codec(codec, params);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        scatter_codec(codec, params);
        const double lp = vae_loss(codec, x, eps, beta, false, nullptr).total;
        params[i] = saved - h;
        scatter_codec(codec, params);
        const double lm = vae_loss(codec, x, eps, beta, false, nullptr).total;
        params[i] = saved;

        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max(1e-10, std::abs(fd) + std::abs(analytic[i]));
        const double rel = std::abs(fd - analytic[i]) / denom;
        max_rel = std::max(max_rel, rel);
    }
    scatter_codec(codec, params);
    return max_rel;
}

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;

} // namespace

void save_checkpoint(const SemanticCodec& codec, const std::string& path) {
    BinWriter w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(codec.variant));
    w.u32(static_cast<std::uint32_t>(codec.spec.L));
    w.u32(static_cast<std::uint32_t>(codec.spec.k));
    w.f64(codec.spec.P);
    w.u32(static_cast<std::uint32_t>(codec.spec.hidden.size()));
    for (const int hsize : codec.spec.hidden) w.u32(static_cast<std::uint32_t>(hsize));

    for (std::size_t i = 0; i < codec.encoder_trunk.layers.size(); ++i)
        write_linear(w, codec.encoder_trunk.layers[i], codec.encoder_trunk.acts[i]);
    write_linear(w, codec.mean_head, Act::Identity);
    if (codec.variant == CodecVariant::Vae) write_linear(w, codec.logvar_head, Act::Identity);
    for (std::size_t i = 0; i < codec.decoder.layers.size(); ++i)
        write_linear(w, codec.decoder.layers[i], codec.decoder.acts[i]);

    if (codec.variant == CodecVariant::VqVae) {
        w.u8(1); // codebook block present
        w.u32(static_cast<std::uint32_t>(codec.codebook.entries.rows()));
        w.u32(static_cast<std::uint32_t>(codec.codebook.entries.cols()));
        w.f64_array(codec.codebook.entries.data(), codec.codebook.entries.size());
    } else {
        w.u8(0);
    }
    w.close();
}

SemanticCodec load_checkpoint(const std::string& path) {
    BinReader r(path);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic (not an HSCM file)");
    if (r.u32() != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    SemanticCodec c;
    const std::uint8_t kind = r.u8();
    if (kind > 1)
        throw std::runtime_error("checkpoint: not a codec checkpoint (kind byte " +
                                 std::to_string(kind) + ")");
    c.variant = static_cast<CodecVariant>(kind);
    c.spec.L = static_cast<int>(r.u32());
    c.spec.k = static_cast<int>(r.u32());
    c.spec.P = r.f64();
    const std::uint32_t nh = r.u32();
    c.spec.hidden.clear();
    for (std::uint32_t i = 0; i < nh; ++i) c.spec.hidden.push_back(static_cast<int>(r.u32()));
    if (c.spec.L < 1 || c.spec.k < 1 || c.spec.hidden.empty())
        throw std::runtime_error("checkpoint: invalid architecture descriptor");

    const int latent = 2 * c.spec.k;
    int prev = c.spec.L * c.spec.L;
    for (const int hsize : c.spec.hidden) {
        c.encoder_trunk.layers.push_back(read_linear(r, prev, hsize, Act::Relu));
        c.encoder_trunk.acts.push_back(Act::Relu);
        prev = hsize;
    }
    c.mean_head = read_linear(r, prev, latent, Act::Identity);
    if (c.variant == CodecVariant::Vae)
        c.logvar_head = read_linear(r, prev, latent, Act::Identity);

    prev = latent;
    for (auto it = c.spec.hidden.rbegin(); it != c.spec.hidden.rend(); ++it) {
        c.decoder.layers.push_back(read_linear(r, prev, *it, Act::Relu));
        c.decoder.acts.push_back(Act::Relu);
        prev = *it;
    }
    c.decoder.layers.push_back(read_linear(r, prev, c.spec.L * c.spec.L, Act::Sigmoid));
    c.decoder.acts.push_back(Act::Sigmoid);

    if (r.u8() == 1) {
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        if (cols != latent) throw std::runtime_error("checkpoint: codebook width mismatch");
        c.codebook.entries = Matrix(rows, cols);
        r.f64_array(c.codebook.entries.data(), c.codebook.entries.size());
        c.spec.codebook_size = rows;
    }
    return c;
}

} // namespace hsc
