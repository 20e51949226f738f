#include "nvc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "nvc/errors.hpp"
#include "nvc/rng.hpp"

namespace nvc {

namespace {

// Forward tape for one sample: everything the backward pass reads.
// Jacobians (k x d, row-major) are only filled when lambda > 0.
struct Tape {
    int k = 0, d = 0, blocks = 0;
    std::vector<double> a;   // (blocks+1) x k; a[0] is the first-layer output
    std::vector<double> z0;  // k, pre-activation of the first layer
    std::vector<double> u, v;    // blocks x k each
    std::vector<double> ja;      // (blocks+1) x k x d
    std::vector<double> ju, jv;  // blocks x k x d each

    Tape(const NetworkArch& arch, bool with_jac) {
        k = arch.width;
        d = arch.dims;
        blocks = arch.blocks;
        a.resize(static_cast<std::size_t>(blocks + 1) * k);
        z0.resize(k);
        u.resize(static_cast<std::size_t>(blocks) * k);
        v.resize(static_cast<std::size_t>(blocks) * k);
        if (with_jac) {
            ja.resize(static_cast<std::size_t>(blocks + 1) * k * d);
            ju.resize(static_cast<std::size_t>(blocks) * k * d);
            jv.resize(static_cast<std::size_t>(blocks) * k * d);
        }
    }
};

}  // namespace

GradBuffers::GradBuffers(const NetworkArch& arch) {
    const std::size_t k = static_cast<std::size_t>(arch.width);
    const std::size_t d = static_cast<std::size_t>(arch.dims);
    w_first.resize(k * d);
    b_first.resize(k);
    blocks.resize(arch.blocks);
    for (auto& b : blocks) {
        b.m1.resize(k * k);
        b.m2.resize(k * k);
        b.b1.resize(k);
        b.b2.resize(k);
    }
    w_last.resize(k);
}

void GradBuffers::zero() {
    auto z = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    z(w_first);
    z(b_first);
    for (auto& b : blocks) {
        z(b.m1);
        z(b.m2);
        z(b.b1);
        z(b.b2);
    }
    z(w_last);
    b_last = 0.0;
}

double auto_learning_rate(std::size_t param_count) {
    constexpr double m_lo = 800'000.0, lr_hi = 1e-4;
    constexpr double m_hi = 5'000'000.0, lr_lo = 2e-5;
    const double m = static_cast<double>(param_count);
    const double lr = lr_hi + (lr_lo - lr_hi) * (m - m_lo) / (m_hi - m_lo);
    return std::clamp(lr, lr_lo, lr_hi);
}

double lr_at_epoch(double lr0, int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw LogicError("epoch must be >= 0");
    return lr0 / std::pow(static_cast<double>(cfg.decay_factor), epoch / cfg.decay_every);
}

double loss_and_gradients(const Parameters& params, const SampleBatch& batch,
                          double lambda, GradBuffers& grads) {
    const NetworkArch& arch = params.arch;
    const int k = arch.width;
    const int d = arch.dims;
    const int nb = arch.blocks;
    const double omega = arch.omega0;
    const std::size_t n = batch.size();
    const bool with_jac = lambda > 0.0;

    if (n == 0) throw ConfigError("empty batch");
    if (with_jac && batch.grad_targets.size() != n * static_cast<std::size_t>(d))
        throw ConfigError("lambda > 0 requires gradient targets in the batch");

    grads.zero();
    Tape tape(arch, with_jac);

    // adjoint scratch
    std::vector<double> abar(k), jabar(with_jac ? k * d : 0);
    std::vector<double> tbar(k), vbar(k), sbar(k), ubar(k);
    std::vector<double> jtbar(with_jac ? k * d : 0), jvbar(with_jac ? k * d : 0);
    std::vector<double> jsbar(with_jac ? k * d : 0), jubar(with_jac ? k * d : 0);
    std::vector<double> g(d);

    double loss_sum = 0.0;

    for (std::size_t si = 0; si < n; ++si) {
        const double* x = &batch.coords[si * d];
        const double y = batch.targets[si];

        // ---- forward, recording the tape ----
        for (int r = 0; r < k; ++r) {
            double z = params.b_first[r];
            for (int c = 0; c < d; ++c)
                z += static_cast<double>(params.w_first[r * d + c]) * x[c];
            tape.z0[r] = z;
            tape.a[r] = std::sin(omega * z);
            if (with_jac) {
                const double dz = omega * std::cos(omega * z);
                for (int c = 0; c < d; ++c)
                    tape.ja[r * d + c] = dz * static_cast<double>(params.w_first[r * d + c]);
            }
        }
        for (int b = 0; b < nb; ++b) {
            const auto& blk = params.blocks[b];
            const double* a_in = &tape.a[static_cast<std::size_t>(b) * k];
            double* a_out = &tape.a[static_cast<std::size_t>(b + 1) * k];
            double* u = &tape.u[static_cast<std::size_t>(b) * k];
            double* v = &tape.v[static_cast<std::size_t>(b) * k];
            for (int r = 0; r < k; ++r) {
                double s = blk.b1[r];
                for (int c = 0; c < k; ++c)
                    s += static_cast<double>(blk.m1[r * k + c]) * a_in[c];
                u[r] = s;
            }
            for (int r = 0; r < k; ++r) {
                double s = blk.b2[r];
                for (int c = 0; c < k; ++c)
                    s += static_cast<double>(blk.m2[r * k + c]) * std::sin(u[c]);
                v[r] = s;
            }
            for (int r = 0; r < k; ++r) a_out[r] = 0.5 * (a_in[r] + std::sin(v[r]));
            if (with_jac) {
                const double* ja_in = &tape.ja[static_cast<std::size_t>(b) * k * d];
                double* ja_out = &tape.ja[static_cast<std::size_t>(b + 1) * k * d];
                double* ju = &tape.ju[static_cast<std::size_t>(b) * k * d];
                double* jv = &tape.jv[static_cast<std::size_t>(b) * k * d];
                for (int r = 0; r < k; ++r)
                    for (int e = 0; e < d; ++e) {
                        double s = 0.0;
                        for (int c = 0; c < k; ++c)
                            s += static_cast<double>(blk.m1[r * k + c]) * ja_in[c * d + e];
                        ju[r * d + e] = s;
                    }
                for (int r = 0; r < k; ++r) {
                    // Js rows are cos(u) * Ju rows
                    for (int e = 0; e < d; ++e) {
                        double s = 0.0;
                        for (int c = 0; c < k; ++c)
                            s += static_cast<double>(blk.m2[r * k + c]) * std::cos(u[c]) *
                                 ju[c * d + e];
                        jv[r * d + e] = s;
                    }
                }
                for (int r = 0; r < k; ++r) {
                    const double cv = std::cos(v[r]);
                    for (int e = 0; e < d; ++e)
                        ja_out[r * d + e] =
                            0.5 * (ja_in[r * d + e] + cv * jv[r * d + e]);
                }
            }
        }
        const double* a_n = &tape.a[static_cast<std::size_t>(nb) * k];
        const double* ja_n =
            with_jac ? &tape.ja[static_cast<std::size_t>(nb) * k * d] : nullptr;
        double f = params.b_last;
        for (int r = 0; r < k; ++r) f += static_cast<double>(params.w_last[r]) * a_n[r];
        if (with_jac) {
            for (int e = 0; e < d; ++e) g[e] = 0.0;
            for (int r = 0; r < k; ++r) {
                const double w = params.w_last[r];
                for (int e = 0; e < d; ++e) g[e] += w * ja_n[r * d + e];
            }
        }

        const double resid = f - y;
        loss_sum += resid * resid;
        if (with_jac) {
            const double* gy = &batch.grad_targets[si * d];
            for (int e = 0; e < d; ++e) {
                const double gd = g[e] - gy[e];
                loss_sum += lambda * gd * gd;
            }
        }

        // ---- backward ----
        const double fbar = 2.0 * resid;
        grads.b_last += fbar;
        for (int r = 0; r < k; ++r) {
            grads.w_last[r] += fbar * a_n[r];
            abar[r] = fbar * static_cast<double>(params.w_last[r]);
        }
        if (with_jac) {
            const double* gy = &batch.grad_targets[si * d];
            for (int r = 0; r < k; ++r) {
                const double w = params.w_last[r];
                for (int e = 0; e < d; ++e) {
                    const double gbar = 2.0 * lambda * (g[e] - gy[e]);
                    grads.w_last[r] += gbar * ja_n[r * d + e];
                    jabar[r * d + e] = w * gbar;
                }
            }
        }

        for (int b = nb - 1; b >= 0; --b) {
            const auto& blk = params.blocks[b];
            auto& gblk = grads.blocks[b];
            const double* a_in = &tape.a[static_cast<std::size_t>(b) * k];
            const double* u = &tape.u[static_cast<std::size_t>(b) * k];
            const double* v = &tape.v[static_cast<std::size_t>(b) * k];
            const double* ja_in =
                with_jac ? &tape.ja[static_cast<std::size_t>(b) * k * d] : nullptr;
            const double* ju = with_jac ? &tape.ju[static_cast<std::size_t>(b) * k * d]
                                        : nullptr;
            const double* jv = with_jac ? &tape.jv[static_cast<std::size_t>(b) * k * d]
                                        : nullptr;

            // a_out = 0.5*(a_in + t), t = sin(v)
            for (int r = 0; r < k; ++r) {
                tbar[r] = 0.5 * abar[r];
                abar[r] = 0.5 * abar[r];
            }
            if (with_jac)
                for (int i = 0; i < k * d; ++i) {
                    jtbar[i] = 0.5 * jabar[i];
                    jabar[i] = 0.5 * jabar[i];
                }

            // through t = sin(v), with Jt = cos(v) .* Jv
            for (int r = 0; r < k; ++r) {
                double vb = std::cos(v[r]) * tbar[r];
                if (with_jac) {
                    double dot = 0.0;
                    for (int e = 0; e < d; ++e) dot += jtbar[r * d + e] * jv[r * d + e];
                    vb -= std::sin(v[r]) * dot;
                    for (int e = 0; e < d; ++e)
                        jvbar[r * d + e] = std::cos(v[r]) * jtbar[r * d + e];
                }
                vbar[r] = vb;
            }

            // through v = M2 s + b2, Jv = M2 Js; s = sin(u), Js = cos(u) .* Ju
            for (int r = 0; r < k; ++r) {
                gblk.b2[r] += vbar[r];
                for (int c = 0; c < k; ++c) {
                    const double s_c = std::sin(u[c]);
                    double m2g = vbar[r] * s_c;
                    if (with_jac) {
                        const double cu = std::cos(u[c]);
                        for (int e = 0; e < d; ++e)
                            m2g += jvbar[r * d + e] * cu * ju[c * d + e];
                    }
                    gblk.m2[r * k + c] += m2g;
                }
            }
            for (int c = 0; c < k; ++c) {
                double sb = 0.0;
                for (int r = 0; r < k; ++r)
                    sb += static_cast<double>(blk.m2[r * k + c]) * vbar[r];
                sbar[c] = sb;
            }
            if (with_jac)
                for (int c = 0; c < k; ++c)
                    for (int e = 0; e < d; ++e) {
                        double js = 0.0;
                        for (int r = 0; r < k; ++r)
                            js += static_cast<double>(blk.m2[r * k + c]) *
                                  jvbar[r * d + e];
                        jsbar[c * d + e] = js;
                    }

            // through s = sin(u), Js = cos(u) .* Ju
            for (int r = 0; r < k; ++r) {
                double ub = std::cos(u[r]) * sbar[r];
                if (with_jac) {
                    double dot = 0.0;
                    for (int e = 0; e < d; ++e) dot += jsbar[r * d + e] * ju[r * d + e];
                    ub -= std::sin(u[r]) * dot;
                    for (int e = 0; e < d; ++e)
                        jubar[r * d + e] = std::cos(u[r]) * jsbar[r * d + e];
                }
                ubar[r] = ub;
            }

            // through u = M1 a_in + b1, Ju = M1 Ja_in
            for (int r = 0; r < k; ++r) {
                gblk.b1[r] += ubar[r];
                for (int c = 0; c < k; ++c) {
                    double m1g = ubar[r] * a_in[c];
                    if (with_jac)
                        for (int e = 0; e < d; ++e)
                            m1g += jubar[r * d + e] * ja_in[c * d + e];
                    gblk.m1[r * k + c] += m1g;
                }
            }
            for (int c = 0; c < k; ++c) {
                double ab = 0.0;
                for (int r = 0; r < k; ++r)
                    ab += static_cast<double>(blk.m1[r * k + c]) * ubar[r];
                abar[c] += ab;  // residual passthrough already in abar
            }
            if (with_jac)
                for (int c = 0; c < k; ++c)
                    for (int e = 0; e < d; ++e) {
                        double jb = 0.0;
                        for (int r = 0; r < k; ++r)
                            jb += static_cast<double>(blk.m1[r * k + c]) *
                                  jubar[r * d + e];
                        jabar[c * d + e] += jb;
                    }
        }

        // first layer: a0 = sin(omega z0), J0[r][c] = omega cos(omega z0) W[r][c]
        for (int r = 0; r < k; ++r) {
            const double cz = std::cos(omega * tape.z0[r]);
            const double sz = std::sin(omega * tape.z0[r]);
            double zbar = omega * cz * abar[r];
            if (with_jac) {
                double dot = 0.0;
                for (int c = 0; c < d; ++c)
                    dot += jabar[r * d + c] * static_cast<double>(params.w_first[r * d + c]);
                zbar -= omega * omega * sz * dot;
            }
            grads.b_first[r] += zbar;
            for (int c = 0; c < d; ++c) {
                double wg = zbar * x[c];
                if (with_jac) wg += omega * cz * jabar[r * d + c];
                grads.w_first[r * d + c] += wg;
            }
        }
    }

    // mean over the batch
    const double inv_n = 1.0 / static_cast<double>(n);
    auto scale = [inv_n](std::vector<double>& v) {
        for (auto& x : v) x *= inv_n;
    };
    scale(grads.w_first);
    scale(grads.b_first);
    for (auto& b : grads.blocks) {
        scale(b.m1);
        scale(b.m2);
        scale(b.b1);
        scale(b.b2);
    }
    scale(grads.w_last);
    grads.b_last *= inv_n;
    return loss_sum * inv_n;
}

AdamState::AdamState(const NetworkArch& arch) : m(arch), v(arch) {
    m.zero();
    v.zero();
}

namespace {

void adam_update(std::span<float> p, std::span<const double> g, std::span<double> m,
                 std::span<double> v, const AdamState& st, double lr, double bc1,
                 double bc2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] = static_cast<float>(static_cast<double>(p[i]) -
                                  lr * mhat / (std::sqrt(vhat) + st.eps));
    }
}

}  // namespace

void adam_step(Parameters& params, const GradBuffers& grads, AdamState& state,
               double lr) {
    if (grads.w_first.size() != params.w_first.size() ||
        grads.blocks.size() != params.blocks.size())
        throw LogicError("gradient shapes do not match parameters");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

    adam_update(params.w_first, grads.w_first, state.m.w_first, state.v.w_first, state,
                lr, bc1, bc2);
    adam_update(params.b_first, grads.b_first, state.m.b_first, state.v.b_first, state,
                lr, bc1, bc2);
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        adam_update(params.blocks[b].m1, grads.blocks[b].m1, state.m.blocks[b].m1,
                    state.v.blocks[b].m1, state, lr, bc1, bc2);
        adam_update(params.blocks[b].b1, grads.blocks[b].b1, state.m.blocks[b].b1,
                    state.v.blocks[b].b1, state, lr, bc1, bc2);
        adam_update(params.blocks[b].m2, grads.blocks[b].m2, state.m.blocks[b].m2,
                    state.v.blocks[b].m2, state, lr, bc1, bc2);
        adam_update(params.blocks[b].b2, grads.blocks[b].b2, state.m.blocks[b].b2,
                    state.v.blocks[b].b2, state, lr, bc1, bc2);
    }
    adam_update(params.w_last, grads.w_last, state.m.w_last, state.v.w_last, state, lr,
                bc1, bc2);
    {
        float p[1] = {params.b_last};
        double g[1] = {grads.b_last};
        double m[1] = {state.m.b_last};
        double v[1] = {state.v.b_last};
        adam_update(p, g, m, v, state, lr, bc1, bc2);
        params.b_last = p[0];
        state.m.b_last = m[0];
        state.v.b_last = v[0];
    }
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open log file: " + path.string());
    out << "epoch,lr,loss,psnr,seconds\n";
    for (const auto& r : epochs)
        out << r.epoch << ',' << r.lr << ',' << r.mean_loss << ',' << r.probe_psnr
            << ',' << r.seconds << '\n';
}

std::pair<Parameters, TrainLog> train(const Volume& volume, const NetworkArch& arch,
                                      const TrainConfig& cfg) {
    if (arch.dims != volume.dims())
        throw ConfigError("network dimension does not match volume dimension");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.lambda < 0.0)
        throw ConfigError("invalid training configuration");

    const auto res = std::span<const std::uint32_t>(volume.resolution);
    const std::size_t count = volume.cell_count();
    const int d = volume.dims();
    const std::vector<float> norm_values = normalize_values(volume);
    const double grad_scale = 2.0 / (static_cast<double>(volume.vmax) - volume.vmin);

    std::vector<double> grad_grid;  // count x d, normalized value space
    if (cfg.lambda > 0.0) {
        grad_grid = gradient_field(volume);
        for (auto& x : grad_grid) x *= grad_scale;
    }

    Parameters params = init_params(arch, cfg.seed);
    GradBuffers grads(arch);
    AdamState adam(arch);

    const double lr0 = cfg.lr_initial > 0.0 ? cfg.lr_initial
                                            : auto_learning_rate(param_count(arch));
    const std::size_t steps_per_epoch =
        (count + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);

    // fixed probe set: evenly strided grid points, for per-epoch PSNR
    std::vector<std::size_t> probe;
    if (cfg.probe_psnr) {
        const std::size_t probe_n = std::min<std::size_t>(count, 4096);
        for (std::size_t i = 0; i < probe_n; ++i) probe.push_back(i * count / probe_n);
    }

    SampleBatch batch;
    batch.dims = d;
    batch.coords.resize(static_cast<std::size_t>(cfg.batch_size) * d);
    batch.targets.resize(cfg.batch_size);
    if (cfg.lambda > 0.0)
        batch.grad_targets.resize(static_cast<std::size_t>(cfg.batch_size) * d);

    TrainLog log;
    std::vector<std::uint32_t> idx(d);
    std::uint64_t step_counter = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(lr0, epoch, cfg);
        double loss_accum = 0.0;

        for (std::size_t step = 0; step < steps_per_epoch; ++step, ++step_counter) {
            Rng rng(mix_seed(cfg.seed, step_counter));
            for (int i = 0; i < cfg.batch_size; ++i) {
                const std::size_t f = rng.next_below(count);
                unflatten_index(f, res, idx);
                grid_to_coord(
                    idx, res,
                    std::span<double>(batch.coords).subspan(static_cast<std::size_t>(i) * d, d));
                batch.targets[i] = norm_values[f];
                if (cfg.lambda > 0.0)
                    for (int e = 0; e < d; ++e)
                        batch.grad_targets[static_cast<std::size_t>(i) * d + e] =
                            grad_grid[f * d + e];
            }
            const double loss = loss_and_gradients(params, batch, cfg.lambda, grads);
            if (!std::isfinite(loss))
                throw DataError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch) + ", step " + std::to_string(step));
            adam_step(params, grads, adam, lr);
            loss_accum += loss;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.mean_loss = loss_accum / static_cast<double>(steps_per_epoch);
        rec.probe_psnr = std::numeric_limits<double>::quiet_NaN();
        if (!probe.empty()) {
            Evaluator ev(params);
            std::vector<double> coord(d);
            double mse = 0.0;
            for (std::size_t f : probe) {
                unflatten_index(f, res, idx);
                grid_to_coord(idx, res, coord);
                const double pred =
                    denormalize_value(ev.value(coord), volume.vmin, volume.vmax);
                const double err = pred - static_cast<double>(volume.values[f]);
                mse += err * err;
            }
            mse /= static_cast<double>(probe.size());
            const double range = static_cast<double>(volume.vmax) - volume.vmin;
            rec.probe_psnr = mse == 0.0 ? std::numeric_limits<double>::infinity()
                                        : 10.0 * std::log10(range * range / mse);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                    t_start)
                          .count();
        log.epochs.push_back(rec);
    }
    return {std::move(params), std::move(log)};
}

}  // namespace nvc
