#include "hsc/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hsc/binio.hpp"
#include "hsc/cr.hpp"

namespace hsc {

std::vector<double> FinetuneConfig::snr_grid() const {
    std::vector<double> grid;
    for (double s = snr_lo_db; s <= snr_hi_db + 1e-9; s += snr_step_db) grid.push_back(s);
    return grid;
}

AdapterPair make_adapters(int d, int k, int L, const AdapterConfig& cfg, Rng& rng) {
    AdapterPair p;
    p.d = d;
    const int latent = 2 * k;
    const int pixels = L * L;
    p.enc1 = Linear(latent, cfg.sr_hidden);
    p.enc2 = Linear(cfg.sr_hidden, latent);
    p.dec1 = Linear(pixels, cfg.img_hidden);
    p.dec2 = Linear(cfg.img_hidden, pixels);
    Rng init = rng.stream("adapter-init");
    p.enc1.init(init);
    p.dec1.init(init);
    // Output layers start at zero so the residual blocks begin as identity.
    return p;
}

namespace {

struct ResidualTape {
    Matrix input;
    Matrix hidden; // post-ReLU
};

// out = x + l2(relu(l1(x)))
Matrix residual_forward(const Linear& l1, const Linear& l2, const Matrix& x, ResidualTape* tape) {
    Matrix h = l1.forward(x);
    apply_act(Act::Relu, h);
    Matrix out = l2.forward(h);
    out += x;
    if (tape) {
        tape->input = x;
        tape->hidden = std::move(h);
    }
    return out;
}

Matrix residual_backward(const Linear& l1, const Linear& l2, const ResidualTape& tape,
                         const Matrix& dout, LinearGrads& g1, LinearGrads& g2) {
    Matrix dh = linear_backward(l2, tape.hidden, dout, g2);
    act_backward(Act::Relu, tape.hidden, dh);
    Matrix dx = linear_backward(l1, tape.input, dh, g1);
    dx += dout;
    return dx;
}

Matrix flatten_subset(const std::vector<Image>& ds, int L, std::size_t budget) {
    const std::size_t n = std::min(ds.size(), budget);
    Matrix x(static_cast<int>(n), L * L);
    for (std::size_t i = 0; i < n; ++i) {
        if (ds[i].side() != L) throw std::invalid_argument("dataset image side mismatch");
        std::memcpy(x.data() + i * static_cast<std::size_t>(L) * L, ds[i].pixels.data(),
                    sizeof(double) * L * L);
    }
    return x;
}

// Row-wise normalization shared with the codec training path.
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

// Per-row slow-fading SR channel: returns the perturbed latent rows and the
// gain applied to each row (identity when equalizing).
struct SrChannelDraw {
    Matrix z_received;
    std::vector<cdouble> gains; // per-row effective gain on the signal term
};

SrChannelDraw sr_channel_rows(const Matrix& z, const FinetuneConfig& cfg,
                              std::span<const double> snr_per_row, Rng& rng) {
    SrChannelDraw out;
    out.z_received = z;
    out.gains.assign(z.rows(), cdouble{1.0, 0.0});
    for (int i = 0; i < z.rows(); ++i) {
        const cdouble h = sample_fading(cfg.mu, rng);
        const double sigma2 =
            snr_to_noise_power(snr_per_row[i], cdouble{std::sqrt(cfg.mu), 0.0}, 1.0);
        const double sd = std::sqrt(sigma2);
        for (int c = 0; c < z.cols() / 2; ++c) {
            cdouble sym{z(i, 2 * c), z(i, 2 * c + 1)};
            cdouble y = h * sym + rng.cnormal(1.0) * sd;
            if (cfg.equalize) y /= h;
            out.z_received(i, 2 * c) = y.real();
            out.z_received(i, 2 * c + 1) = y.imag();
        }
        out.gains[i] = cfg.equalize ? cdouble{1.0, 0.0} : h;
    }
    return out;
}

// dz = conj(gain) * dy per complex pair (transpose of the channel Jacobian).
void apply_gain_transpose(Matrix& d, std::span<const cdouble> gains) {
    for (int i = 0; i < d.rows(); ++i) {
        const cdouble g = gains[i];
        if (g == cdouble{1.0, 0.0}) continue;
        for (int c = 0; c < d.cols() / 2; ++c) {
            const cdouble v{d(i, 2 * c), d(i, 2 * c + 1)};
            const cdouble r = std::conj(g) * v;
            d(i, 2 * c) = r.real();
            d(i, 2 * c + 1) = r.imag();
        }
    }
}

} // namespace

TrainResult finetune(SemanticCodec& codec, const std::vector<Image>& dataset,
                     const FinetuneConfig& cfg) {
    if (codec.variant != CodecVariant::Vae)
        throw std::invalid_argument("finetune: VAE variant required");
    if (dataset.empty()) throw std::invalid_argument("finetune: empty dataset");

    TrainResult result;
    if (cfg.epochs == 0) return result;

    const Matrix all = flatten_subset(dataset, codec.spec.L, cfg.sample_budget);
    const std::vector<double> grid = cfg.snr_grid();

    // Flat parameter/optimizer state across trunk + heads + decoder. The
    // logvar head receives zero gradient on this deterministic path and
    // therefore stays fixed under Adam.
    std::vector<double> params, gradvec;
    auto gather_all = [&](std::vector<double>& out) {
        out.clear();
        visit_params(codec.encoder_trunk, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
        visit_params(codec.mean_head, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
        visit_params(codec.logvar_head, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
        visit_params(codec.decoder, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
    };
    auto scatter_all = [&](std::span<const double> in) {
        std::size_t pos = 0;
        const ParamVisitor take = [&](double* p, std::size_t n) {
            std::copy(in.begin() + pos, in.begin() + pos + n, p);
            pos += n;
        };
        visit_params(codec.encoder_trunk, take);
        visit_params(codec.mean_head, take);
        visit_params(codec.logvar_head, take);
        visit_params(codec.decoder, take);
    };
    gather_all(params);
    Adam adam(params.size(), cfg.lr);

    const int latent = 2 * codec.spec.k;
    const int pixels = codec.spec.L * codec.spec.L;
    Rng root(cfg.seed);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = root.stream(0x4000 + epoch);
        Rng ch_rng = root.stream(0x5000 + epoch);
        std::vector<std::size_t> order(static_cast<std::size_t>(all.rows()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        EpochStats stats;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const int b = static_cast<int>(stop - start);
            Matrix x(b, pixels);
            for (int i = 0; i < b; ++i)
                std::memcpy(x.data() + static_cast<std::size_t>(i) * pixels,
                            all.data() + order[start + i] * pixels, sizeof(double) * pixels);

            Mlp::Tape trunk_tape;
            const Matrix h = codec.encoder_trunk.forward(x, &trunk_tape);
            const Matrix m = codec.mean_head.forward(h);

            std::vector<double> norms;
            const Matrix z = normalize_rows(m, codec.spec.k, codec.spec.P, norms);

            std::vector<double> snrs(b);
            for (int i = 0; i < b; ++i)
                snrs[i] = grid[static_cast<std::size_t>(ch_rng.below(grid.size()))];
            const SrChannelDraw draw = sr_channel_rows(z, cfg, snrs, ch_rng);

            Mlp::Tape dec_tape;
            const Matrix xhat = codec.decoder.forward(draw.z_received, &dec_tape);

            double recon = 0.0;
            for (std::size_t i = 0; i < xhat.size(); ++i) {
                const double d = xhat.data()[i] - x.data()[i];
                recon += d * d;
            }
            recon /= static_cast<double>(b) * pixels;
            if (!std::isfinite(recon))
                throw NumericalError("finetune: loss diverged at epoch " + std::to_string(epoch));

            Matrix dxhat(b, pixels);
            const double rscale = 2.0 / (static_cast<double>(b) * pixels);
            for (std::size_t i = 0; i < dxhat.size(); ++i)
                dxhat.data()[i] = rscale * (xhat.data()[i] - x.data()[i]);

            Mlp::Grads dec_grads = codec.decoder.zero_grads();
            Matrix dz = codec.decoder.backward(dec_tape, dxhat, dec_grads);
            apply_gain_transpose(dz, draw.gains);
            const Matrix dm = normalize_rows_backward(m, dz, codec.spec.k, codec.spec.P, norms);

            LinearGrads mean_grads;
            Matrix dh = linear_backward(codec.mean_head, h, dm, mean_grads);
            Mlp::Grads trunk_grads = codec.encoder_trunk.zero_grads();
            codec.encoder_trunk.backward(trunk_tape, dh, trunk_grads);

            gradvec.clear();
            gather_grads(trunk_grads, gradvec);
            {
                std::vector<double> tmp;
                gradvec.insert(gradvec.end(), mean_grads.dw.data(),
                               mean_grads.dw.data() + mean_grads.dw.size());
                gradvec.insert(gradvec.end(), mean_grads.db.begin(), mean_grads.db.end());
                // zero block for the untouched logvar head
                const std::size_t lv = static_cast<std::size_t>(codec.logvar_head.w.size()) +
                                       codec.logvar_head.b.size();
                gradvec.insert(gradvec.end(), lv, 0.0);
                gather_grads(dec_grads, tmp);
                gradvec.insert(gradvec.end(), tmp.begin(), tmp.end());
            }

            gather_all(params);
            adam.step(params, gradvec);
            scatter_all(params);

            stats.recon += recon;
            stats.total += recon;
            ++steps;
        }
        stats.recon /= steps;
        stats.total /= steps;
        result.epochs.push_back(stats);
    }
    return result;
}

Matrix adapt_sr(const AdapterPair& p, const Matrix& z_rows) {
    return residual_forward(p.enc1, p.enc2, z_rows, nullptr);
}

Matrix adapt_image(const AdapterPair& p, const Matrix& x_rows) {
    return residual_forward(p.dec1, p.dec2, x_rows, nullptr);
}

void AdapterRegistry::put(AdapterPair pair) {
    if (pair.d < 0) throw std::invalid_argument("AdapterRegistry: pair has no d tag");
    pairs_[pair.d] = std::move(pair);
}

const AdapterPair& AdapterRegistry::at(int d) const {
    const auto it = pairs_.find(d);
    if (it == pairs_.end())
        throw std::out_of_range("AdapterRegistry: no adapters trained for d = " + std::to_string(d));
    return it->second;
}

std::vector<int> AdapterRegistry::trained_ranks() const {
    std::vector<int> out;
    for (const auto& [d, _] : pairs_) out.push_back(d);
    return out;
}

AdapterPair train_ncr_adapters(const SemanticCodec& frozen, int d,
                               const std::vector<Image>& dataset, const FinetuneConfig& cfg,
                               const ChainSpec& chain, const AdapterConfig& acfg) {
    if (frozen.variant != CodecVariant::Vae)
        throw std::invalid_argument("train_ncr_adapters: VAE variant required");
    if (dataset.empty()) throw std::invalid_argument("train_ncr_adapters: empty dataset");
    const int L = frozen.spec.L;
    if (d < 0 || d > L) throw std::invalid_argument("train_ncr_adapters: d out of range");

    Rng root(cfg.seed);
    AdapterPair pair = make_adapters(d, frozen.spec.k, L, acfg, root);
    if (cfg.epochs == 0) return pair;

    const Matrix all = flatten_subset(dataset, L, cfg.sample_budget);
    const std::vector<double> grid = cfg.snr_grid();
    const int pixels = L * L;

    auto gather_pair = [&](std::vector<double>& out) {
        out.clear();
        for (Linear* l : {&pair.enc1, &pair.enc2, &pair.dec1, &pair.dec2})
            visit_params(*l, [&](double* p, std::size_t n) { out.insert(out.end(), p, p + n); });
    };
    auto scatter_pair = [&](std::span<const double> in) {
        std::size_t pos = 0;
        for (Linear* l : {&pair.enc1, &pair.enc2, &pair.dec1, &pair.dec2})
            visit_params(*l, [&](double* p, std::size_t n) {
                std::copy(in.begin() + pos, in.begin() + pos + n, p);
                pos += n;
            });
    };

    std::vector<double> params, gradvec;
    gather_pair(params);
    Adam adam(params.size(), cfg.lr);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng = root.stream(0x6000 + epoch);
        Rng ch_rng = root.stream(0x7000 + epoch);
        std::vector<std::size_t> order(static_cast<std::size_t>(all.rows()));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const int b = static_cast<int>(stop - start);
            Matrix x(b, pixels);
            for (int i = 0; i < b; ++i)
                std::memcpy(x.data() + static_cast<std::size_t>(i) * pixels,
                            all.data() + order[start + i] * pixels, sizeof(double) * pixels);

            // Frozen encoder produces the latent; only the adapter is taped.
            const Matrix h = frozen.encoder_trunk.forward(x);
            const Matrix m = frozen.mean_head.forward(h);
            ResidualTape enc_tape;
            const Matrix ma = residual_forward(pair.enc1, pair.enc2, m, &enc_tape);

            std::vector<double> norms;
            const Matrix z = normalize_rows(ma, frozen.spec.k, frozen.spec.P, norms);

            // Transmitter mirror (no channel): basis source. Gradients are
            // stopped through this branch: A is a per-sample constant.
            const Matrix xhat_tx = frozen.decoder.forward(z);
            const Matrix xhat_tx_a = residual_forward(pair.dec1, pair.dec2, xhat_tx, nullptr);

            // SR over its fading channel.
            std::vector<double> snrs(b);
            for (int i = 0; i < b; ++i)
                snrs[i] = grid[static_cast<std::size_t>(ch_rng.below(grid.size()))];
            const SrChannelDraw draw = sr_channel_rows(z, cfg, snrs, ch_rng);

            Mlp::Tape dec_tape;
            const Matrix xhat_rx = frozen.decoder.forward(draw.z_received, &dec_tape);
            ResidualTape dec_adapter_tape;
            const Matrix xhat_rx_a =
                residual_forward(pair.dec1, pair.dec2, xhat_rx, &dec_adapter_tape);

            // Per-image CR through the digital chain and its own channel,
            // then recomposition.
            double loss = 0.0;
            Matrix dxhat_rx_a(b, pixels);
            const double gscale = 2.0 / (static_cast<double>(b) * pixels);
            for (int i = 0; i < b; ++i) {
                Matrix xi(L, L), gi(L, L);
                std::memcpy(xi.data(), x.data() + static_cast<std::size_t>(i) * pixels,
                            sizeof(double) * pixels);
                std::memcpy(gi.data(), xhat_tx_a.data() + static_cast<std::size_t>(i) * pixels,
                            sizeof(double) * pixels);
                const Image img_x(xi);

                Matrix recomposed;
                Matrix proj_t; // A^T with A the received basis
                if (d > 0) {
                    const ComplementaryPayload payload = build_cr(img_x, Image(gi), d);
                    Matrix c(2 * d, L);
                    for (int r = 0; r < d; ++r)
                        for (int cc = 0; cc < L; ++cc) {
                            c(r, cc) = payload.basis.rows(r, cc);
                            c(d + r, cc) = payload.projected(r, cc);
                        }
                    const ChainFrame frame = chain_transmit(c, chain);
                    ChannelConfig cr_cfg;
                    cr_cfg.mode = ChannelMode::SlowFading;
                    cr_cfg.snr_db = snrs[i];
                    cr_cfg.mu = cfg.mu;
                    const ChannelRealization cr_ch = realize_channel(cr_cfg, ch_rng);
                    const std::vector<cdouble> rx =
                        equalize(transmit(frame.symbols, cr_ch, ch_rng), cr_ch);
                    const Matrix c_hat = chain_receive(frame.header, rx, chain);
                    std::vector<double> flat(c_hat.data(), c_hat.data() + c_hat.size());
                    const UnpackedCr un = unpack_cr(flat, d, L);

                    // Xtilde = A^T Y + (I - A^T A) Xhat_rx_a
                    Matrix xr(L, L);
                    std::memcpy(xr.data(),
                                xhat_rx_a.data() + static_cast<std::size_t>(i) * pixels,
                                sizeof(double) * pixels);
                    Matrix resid = un.projected - matmul(un.basis.rows, xr);
                    recomposed = xr;
                    gemm(true, false, 1.0, un.basis.rows, resid, 1.0, recomposed);
                    proj_t = un.basis.rows;
                } else {
                    recomposed = Matrix(L, L);
                    std::memcpy(recomposed.data(),
                                xhat_rx_a.data() + static_cast<std::size_t>(i) * pixels,
                                sizeof(double) * pixels);
                }

                Matrix g(L, L);
                for (int r = 0; r < L; ++r)
                    for (int cc = 0; cc < L; ++cc) {
                        const double diff = recomposed(r, cc) - xi(r, cc);
                        loss += diff * diff;
                        g(r, cc) = gscale * diff;
                    }

                // d(loss)/d(xhat_rx_a) = (I - A^T A) g
                if (d > 0) {
                    const Matrix ag = matmul(proj_t, g);
                    gemm(true, false, -1.0, proj_t, ag, 1.0, g);
                }
                std::memcpy(dxhat_rx_a.data() + static_cast<std::size_t>(i) * pixels, g.data(),
                            sizeof(double) * pixels);
            }
            loss /= static_cast<double>(b) * pixels;
            if (!std::isfinite(loss))
                throw NumericalError("train_ncr_adapters: loss diverged at epoch " +
                                     std::to_string(epoch));

            // Backward: decoder adapter -> frozen decoder -> channel ->
            // normalization -> encoder adapter.
            LinearGrads g_e1, g_e2, g_d1, g_d2;
            Matrix dxhat_rx =
                residual_backward(pair.dec1, pair.dec2, dec_adapter_tape, dxhat_rx_a, g_d1, g_d2);
            Mlp::Grads scratch = frozen.decoder.zero_grads(); // frozen: grads discarded
            Matrix dz = frozen.decoder.backward(dec_tape, dxhat_rx, scratch);
            apply_gain_transpose(dz, draw.gains);
            const Matrix dma = normalize_rows_backward(ma, dz, frozen.spec.k, frozen.spec.P, norms);
            residual_backward(pair.enc1, pair.enc2, enc_tape, dma, g_e1, g_e2);

            gradvec.clear();
            for (const LinearGrads* g : {&g_e1, &g_e2, &g_d1, &g_d2}) {
                gradvec.insert(gradvec.end(), g->dw.data(), g->dw.data() + g->dw.size());
                gradvec.insert(gradvec.end(), g->db.begin(), g->db.end());
            }
            gather_pair(params);
            adam.step(params, gradvec);
            scatter_pair(params);
        }
    }
    return pair;
}

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kAdapterKind = 2;

} // namespace

void save_adapters(const AdapterRegistry& reg, int k, int L, const std::string& path) {
    BinWriter w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u8(kAdapterKind);
    w.u32(static_cast<std::uint32_t>(k));
    w.u32(static_cast<std::uint32_t>(L));
    const std::vector<int> ranks = reg.trained_ranks();
    w.u32(static_cast<std::uint32_t>(ranks.size()));
    for (const int d : ranks) {
        const AdapterPair& p = reg.at(d);
        w.u32(static_cast<std::uint32_t>(d));
        w.u32(static_cast<std::uint32_t>(p.enc1.out()));
        w.u32(static_cast<std::uint32_t>(p.dec1.out()));
        write_linear(w, p.enc1, Act::Relu);
        write_linear(w, p.enc2, Act::Identity);
        write_linear(w, p.dec1, Act::Relu);
        write_linear(w, p.dec2, Act::Identity);
    }
    w.close();
}

AdapterRegistry load_adapters(const std::string& path, int expect_k, int expect_L) {
    BinReader r(path);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("adapter checkpoint: bad magic");
    if (r.u32() != kVersion) throw std::runtime_error("adapter checkpoint: unsupported version");
    if (r.u8() != kAdapterKind) throw std::runtime_error("adapter checkpoint: wrong kind byte");
    const int k = static_cast<int>(r.u32());
    const int L = static_cast<int>(r.u32());
    if (k != expect_k || L != expect_L)
        throw std::runtime_error("adapter checkpoint: (k, L) mismatch with codec");

    AdapterRegistry reg;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        AdapterPair p;
        p.d = static_cast<int>(r.u32());
        const int sr_hidden = static_cast<int>(r.u32());
        const int img_hidden = static_cast<int>(r.u32());
        const int latent = 2 * k;
        const int pixels = L * L;
        p.enc1 = read_linear(r, latent, sr_hidden, Act::Relu);
        p.enc2 = read_linear(r, sr_hidden, latent, Act::Identity);
        p.dec1 = read_linear(r, pixels, img_hidden, Act::Relu);
        p.dec2 = read_linear(r, img_hidden, pixels, Act::Identity);
        reg.put(std::move(p));
    }
    return reg;
}

} // namespace hsc
