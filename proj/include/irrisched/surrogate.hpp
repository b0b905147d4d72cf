/**
 * @file surrogate.hpp
 * @brief Per-zone LSTM surrogate of root-zone moisture
 *
 * A window holds l+1 daily records [y, water, Kc, ET0, z_r] (l past days and
 * the current day); the model predicts y on the next day. Each layer runs the
 * standard gate recursion
 *
 *   i = sig(W_i x + U_i h + b_i)    f = sig(W_f x + U_f h + b_f)
 *   o = sig(W_o x + U_o h + b_o)    g = tanh(W_c x + U_c h + b_c)
 *   C = f*C + i*g                   h = o*tanh(C)
 *
 * and an affine head reads the last hidden state of the top layer. Gate
 * weights are stacked row-wise in the order i, f, o, c.
 */

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "adam.hpp"
#include "agrohydro.hpp"
#include "errors.hpp"
#include "field.hpp"

namespace irrisched::surrogate {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kFeatures = 5;  ///< y, water, Kc, ET0, z_r
enum Feature { kY = 0, kWater = 1, kKc = 2, kEt0 = 3, kRootDepth = 4 };

/// Raw (unscaled) window, (l+1) x kFeatures, oldest record first.
using Window = Matrix;

struct LstmLayer {
    Matrix w;  ///< 4H x input
    Matrix u;  ///< 4H x H
    Vector b;  ///< 4H
};

struct LstmWeights {
    int units = 32;
    std::vector<LstmLayer> layers;
    Vector w_y;
    double b_y = 0.0;

    int layer_count() const { return static_cast<int>(layers.size()); }

    static LstmWeights zeros(int units, int layer_count, int inputs = kFeatures) {
        LstmWeights w;
        w.units = units;
        for (int l = 0; l < layer_count; ++l) {
            const int in = l == 0 ? inputs : units;
            w.layers.push_back({Matrix::Zero(4 * units, in), Matrix::Zero(4 * units, units), Vector::Zero(4 * units)});
        }
        w.w_y = Vector::Zero(units);
        return w;
    }

    /// Glorot-uniform kernels, unit forget-gate bias.
    static LstmWeights glorot(int units, int layer_count, std::uint64_t seed, int inputs = kFeatures) {
        auto w = zeros(units, layer_count, inputs);
        std::mt19937_64 rng(seed);
        auto fill = [&](Matrix& m) {
            const double a = std::sqrt(6.0 / static_cast<double>(m.rows() / 4 + m.cols()));
            std::uniform_real_distribution<double> u(-a, a);
            for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
        };
        for (auto& l : w.layers) {
            fill(l.w);
            fill(l.u);
            l.b.segment(units, units).setOnes();
        }
        const double a = std::sqrt(6.0 / (units + 1.0));
        std::uniform_real_distribution<double> u(-a, a);
        for (Eigen::Index k = 0; k < w.w_y.size(); ++k) w.w_y(k) = u(rng);
        return w;
    }

    bool finite() const {
        for (const auto& l : layers) {
            if (!l.w.allFinite() || !l.u.allFinite() || !l.b.allFinite()) return false;
        }
        return w_y.allFinite() && std::isfinite(b_y);
    }

    void set_zero() {
        for (auto& l : layers) {
            l.w.setZero();
            l.u.setZero();
            l.b.setZero();
        }
        w_y.setZero();
        b_y = 0.0;
    }

    std::vector<ParamBlock> blocks(const LstmWeights& grad) {
        std::vector<ParamBlock> out;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            out.push_back({layers[k].w.data(), grad.layers[k].w.data(), layers[k].w.size()});
            out.push_back({layers[k].u.data(), grad.layers[k].u.data(), layers[k].u.size()});
            out.push_back({layers[k].b.data(), grad.layers[k].b.data(), layers[k].b.size()});
        }
        out.push_back({w_y.data(), grad.w_y.data(), w_y.size()});
        out.push_back({&b_y, &grad.b_y, 1});
        return out;
    }
};

/// z-score scalers for the input features and the target.
struct Scaler {
    Vector mean = Vector::Zero(kFeatures);
    Vector scale = Vector::Ones(kFeatures);
    double y_mean = 0.0;
    double y_scale = 1.0;
};

struct LstmModel {
    LstmWeights weights;
    Scaler scaler;
    int sequence_length = 5;  ///< l past records; windows hold l+1

    int window_length() const { return sequence_length + 1; }
};

// ---------------------------------------------------------------------------
// Core recursion on standardized, batched inputs (features x batch per step)
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct StepCache {
    Matrix x, i, f, o, g, c, tc, h, c_prev, h_prev;
};

struct ForwardCache {
    std::vector<std::vector<StepCache>> steps;  ///< [layer][t]
};

inline Eigen::RowVectorXd forward(const LstmWeights& w, const std::vector<Matrix>& xs, ForwardCache* cache) {
    const int hdim = w.units;
    const Eigen::Index batch = xs.front().cols();
    std::vector<Matrix> inputs = xs;
    if (cache) cache->steps.assign(w.layers.size(), {});
    Matrix h_top;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& layer = w.layers[l];
        Matrix h = Matrix::Zero(hdim, batch), c = Matrix::Zero(hdim, batch);
        std::vector<Matrix> outputs;
        outputs.reserve(inputs.size());
        for (const auto& x : inputs) {
            Matrix a = layer.w * x + layer.u * h;
            a.colwise() += layer.b;
            StepCache s;
            s.i = a.topRows(hdim).unaryExpr(&sigmoid);
            s.f = a.middleRows(hdim, hdim).unaryExpr(&sigmoid);
            s.o = a.middleRows(2 * hdim, hdim).unaryExpr(&sigmoid);
            s.g = a.bottomRows(hdim).array().tanh();
            s.c_prev = c;
            s.h_prev = h;
            c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
            s.tc = c.array().tanh();
            h = s.o.cwiseProduct(s.tc);
            outputs.push_back(h);
            if (cache) {
                s.x = x;
                s.c = c;
                s.h = h;
                cache->steps[l].push_back(std::move(s));
            }
        }
        inputs = std::move(outputs);
        h_top = h;
    }
    Eigen::RowVectorXd y = w.w_y.transpose() * h_top;
    y.array() += w.b_y;
    return y;
}

/// Reverse pass. Accumulates parameter gradients into `grad` (if given) and
/// returns d(sum dy*y)/dx per step when `dx` is given.
inline void backward(const LstmWeights& w, const ForwardCache& cache, const Eigen::RowVectorXd& dy, LstmWeights* grad,
                     std::vector<Matrix>* dx) {
    const int hdim = w.units;
    const std::size_t steps = cache.steps.front().size();
    const Eigen::Index batch = dy.size();
    // gradient arriving at each step's hidden output from the layer above
    std::vector<Matrix> dh_above(steps, Matrix::Zero(hdim, batch));
    dh_above.back() = w.w_y * dy;
    if (grad) {
        grad->w_y += cache.steps.back().back().h * dy.transpose();
        grad->b_y += dy.sum();
    }
    for (int l = static_cast<int>(w.layers.size()) - 1; l >= 0; --l) {
        const auto& layer = w.layers[l];
        const auto& cs = cache.steps[l];
        const Eigen::Index in = layer.w.cols();
        std::vector<Matrix> dbelow(steps, Matrix::Zero(in, batch));
        Matrix dh_next = Matrix::Zero(hdim, batch), dc_next = Matrix::Zero(hdim, batch);
        Matrix da(4 * hdim, batch);
        for (int t = static_cast<int>(steps) - 1; t >= 0; --t) {
            const auto& s = cs[t];
            const Matrix dh = dh_above[t] + dh_next;
            const Matrix dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tc.array().square()).matrix());
            da.topRows(hdim) = (dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
            da.middleRows(hdim, hdim) = (dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
            da.middleRows(2 * hdim, hdim) = (dh.array() * s.tc.array() * s.o.array() * (1.0 - s.o.array())).matrix();
            da.bottomRows(hdim) = (dc.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();
            dc_next = dc.cwiseProduct(s.f);
            dh_next.noalias() = layer.u.transpose() * da;
            if (grad) {
                auto& gl = grad->layers[l];
                gl.w.noalias() += da * s.x.transpose();
                gl.u.noalias() += da * s.h_prev.transpose();
                gl.b += da.rowwise().sum();
            }
            if (l > 0 || dx) dbelow[t].noalias() = layer.w.transpose() * da;
        }
        if (l > 0) {
            dh_above = std::move(dbelow);
        } else if (dx) {
            *dx = std::move(dbelow);
        }
    }
}

inline std::vector<Matrix> standardize(const LstmModel& m, const Window& win) {
    std::vector<Matrix> xs;
    for (Eigen::Index t = 0; t < win.rows(); ++t) {
        xs.push_back(((win.row(t).transpose() - m.scaler.mean).array() / m.scaler.scale.array()).matrix());
    }
    return xs;
}

}  // namespace detail

/// Predicted root-zone moisture for the day after the window.
inline double lstm_forward(const LstmModel& m, const Window& window) {
    if (window.rows() != m.window_length() || window.cols() != kFeatures) {
        throw InvalidArgument("lstm_forward: window shape does not match the model");
    }
    const auto y = detail::forward(m.weights, detail::standardize(m, window), nullptr);
    return y(0) * m.scaler.y_scale + m.scaler.y_mean;
}

/// d prediction / d raw window entry, same shape as the window.
inline Matrix input_gradient(const LstmModel& m, const Window& window) {
    if (window.rows() != m.window_length() || window.cols() != kFeatures) {
        throw InvalidArgument("input_gradient: window shape does not match the model");
    }
    detail::ForwardCache cache;
    detail::forward(m.weights, detail::standardize(m, window), &cache);
    std::vector<Matrix> dx;
    detail::backward(m.weights, cache, Eigen::RowVectorXd::Constant(1, m.scaler.y_scale), nullptr, &dx);
    Matrix g(window.rows(), kFeatures);
    for (Eigen::Index t = 0; t < window.rows(); ++t) {
        g.row(t) = (dx[t].col(0).array() / m.scaler.scale.array()).transpose();
    }
    return g;
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

/// Per-day exogenous inputs of a rollout: columns water, Kc, ET0, z_r.
using ForcingTrajectory = Matrix;

/// Window ending at rollout day k: the first one is `past` (l full records)
/// followed by [y_now, forcing row 0]; later ones shift in the predictions.
inline Window rollout_window(const LstmModel& m, const Matrix& past, const std::vector<double>& y,
                             const ForcingTrajectory& forcing, int k) {
    const int l = m.sequence_length;
    Window win(l + 1, kFeatures);
    for (int r = 0; r <= l; ++r) {
        const int day = k - l + r;  // day index relative to the rollout start
        if (day < 0) {
            win.row(r) = past.row(past.rows() + day);
        } else {
            win(r, kY) = y[day];
            win.block(r, 1, 1, 4) = forcing.row(day);
        }
    }
    return win;
}

/// Recursive one-step predictions y_1..y_horizon.
inline std::vector<double> rollout(const LstmModel& m, const Matrix& past, double y_now,
                                   const ForcingTrajectory& forcing, int horizon) {
    if (horizon < 1) throw InvalidArgument("rollout: horizon must be at least 1");
    if (forcing.rows() < horizon || forcing.cols() != 4) throw InvalidArgument("rollout: forcing too short");
    if (past.rows() != m.sequence_length || past.cols() != kFeatures) {
        throw InvalidArgument("rollout: need l past records");
    }
    std::vector<double> y{y_now};
    for (int k = 0; k < horizon; ++k) y.push_back(lstm_forward(m, rollout_window(m, past, y, forcing, k)));
    return {y.begin() + 1, y.end()};
}

/// Gradient of J = sum_k dJ_dy[k] * y_{k+1} with respect to the water input
/// of every rollout day, by reverse accumulation through the recursion.
inline std::vector<double> rollout_water_gradient(const LstmModel& m, const Matrix& past, double y_now,
                                                  const ForcingTrajectory& forcing, const std::vector<double>& dJ_dy,
                                                  std::vector<double>* trajectory = nullptr) {
    const int n = static_cast<int>(dJ_dy.size());
    std::vector<double> y{y_now};
    std::vector<Window> windows;
    for (int k = 0; k < n; ++k) {
        windows.push_back(rollout_window(m, past, y, forcing, k));
        y.push_back(lstm_forward(m, windows.back()));
    }
    if (trajectory) trajectory->assign(y.begin() + 1, y.end());
    // lambda[j] = total derivative of J with respect to y[j]
    std::vector<double> lambda(n + 1, 0.0), du(n, 0.0);
    for (int k = 0; k < n; ++k) lambda[k + 1] = dJ_dy[k];
    const int l = m.sequence_length;
    for (int k = n - 1; k >= 0; --k) {
        if (lambda[k + 1] == 0.0) continue;
        const Matrix g = input_gradient(m, windows[k]);
        for (int r = 0; r <= l; ++r) {
            const int day = k - l + r;
            if (day < 0) continue;
            lambda[day] += lambda[k + 1] * g(r, kY);
            du[day] += lambda[k + 1] * g(r, kWater);
        }
    }
    return du;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size() || y.empty()) throw InvalidArgument("rmse: need equal non-empty series");
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - yhat[k]) * (y[k] - yhat[k]);
    return std::sqrt(s / y.size());
}

inline double r2(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size() || y.empty()) throw InvalidArgument("r2: need equal non-empty series");
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        ss_res += (y[k] - yhat[k]) * (y[k] - yhat[k]);
        ss_tot += (y[k] - mean) * (y[k] - mean);
    }
    if (ss_tot == 0.0) throw InvalidArgument("r2: undefined for a constant series");
    return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

struct GenerationRanges {
    Range et0{0.1, 8.99};
    Range kc{0.4, 1.02};
    Range irrigation{4.0, 52.0};
    /// per-episode probability of irrigating on a given day
    Range irrigation_probability{0.05, 0.35};
    std::vector<double> root_depths{0.5, 1.0};
    /// initial root-zone moisture is drawn between these suction heads (m)
    Range initial_suction{1.0, 200.0};
    int days = 60;
    double noise_std = 0.0005;

    static GenerationRanges for_zone(const ZoneSpec& z) {
        GenerationRanges r;
        r.irrigation = z.irrigation;
        return r;
    }
};

/// One open-loop episode: records[t] = [y_t, water_t, Kc_t, ET0_t, z_r] with
/// y_t the start-of-day root-zone moisture; next[t] = y_{t+1}.
struct Episode {
    Matrix records;
    std::vector<double> next;
};

inline std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t e) {
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + e + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Episode simulate_episode(const agrohydro::RichardsColumn& column, const GenerationRanges& r,
                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](Range g) { return g.lo + (g.hi - g.lo) * unit(rng); };
    const double z_r = r.root_depths[static_cast<std::size_t>(unit(rng) * r.root_depths.size()) % r.root_depths.size()];
    const double p_irr = draw(r.irrigation_probability);
    const double suction = std::exp(draw({std::log(r.initial_suction.lo), std::log(r.initial_suction.hi)}));
    auto state = column.hydrostatic(-suction);
    Episode ep;
    ep.records.resize(r.days, kFeatures);
    double y = column.root_zone_moisture(state, z_r);
    for (int d = 0; d < r.days; ++d) {
        agrohydro::DailyForcing f;
        f.et0 = draw(r.et0);
        f.kc = draw(r.kc);
        f.irrigation = unit(rng) < p_irr ? draw(r.irrigation) : 0.0;
        f.z_r = z_r;
        ep.records.row(d) << y, f.irrigation + f.rain, f.kc, f.et0, z_r;
        state = column.simulate_day(state, f, r.noise_std, rng).state;
        y = column.root_zone_moisture(state, z_r);
        ep.next.push_back(y);
    }
    return ep;
}

struct Dataset {
    int sequence_length = 5;
    std::vector<Window> windows;
    std::vector<double> targets;
    std::vector<int> episode;  ///< source episode of each window
    int failed_episodes = 0;

    std::size_t size() const { return windows.size(); }

    void append(const Episode& ep, int id) {
        const int w = sequence_length + 1;
        for (Eigen::Index t = w - 1; t < ep.records.rows(); ++t) {
            windows.push_back(ep.records.middleRows(t - w + 1, w));
            targets.push_back(ep.next[t]);
            episode.push_back(id);
        }
    }
};

/// Seeded open-loop simulations; episodes run concurrently with their own
/// seeds, so the result does not depend on the thread count.
inline Dataset generate_training_data(const agrohydro::RichardsColumn& column, const GenerationRanges& ranges,
                                      int episodes, std::uint64_t seed, int sequence_length = 5,
                                      unsigned threads = 0) {
    Dataset ds;
    ds.sequence_length = sequence_length;
    if (episodes <= 0) return ds;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<Episode> eps(episodes);
    std::vector<char> ok(episodes, 0);
    auto work = [&](unsigned t) {
        for (int e = static_cast<int>(t); e < episodes; e += static_cast<int>(threads)) {
            try {
                eps[e] = simulate_episode(column, ranges, episode_seed(seed, e));
                ok[e] = 1;
            } catch (const ConvergenceFailure&) {
            }
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::future<void>> fs;
        for (unsigned t = 0; t < threads; ++t) fs.push_back(std::async(std::launch::async, work, t));
        for (auto& f : fs) f.get();
    }
    for (int e = 0; e < episodes; ++e) {
        if (ok[e]) {
            ds.append(eps[e], e);
        } else {
            ++ds.failed_episodes;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int units = 32;
    int layers = 2;
    int epochs = 40;
    double learning_rate = 1e-4;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    double validation_fraction = 0.1;
};

struct TrainReport {
    std::vector<double> train_loss;       ///< mean batch loss per epoch
    std::vector<double> validation_loss;  ///< per epoch
    int best_epoch = -1;
    double test_loss = 0.0;
    std::size_t train_windows = 0, validation_windows = 0, test_windows = 0;
};

/// Episode-level 80/10/10 split (shuffled by seed).
struct Split {
    std::vector<std::size_t> train, validation, test;
};

inline Split split_dataset(const Dataset& ds, const TrainConfig& cfg) {
    int max_ep = -1;
    for (int e : ds.episode) max_ep = std::max(max_ep, e);
    std::vector<int> order(max_ep + 1);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> part(max_ep + 1, 0);
    const int n = max_ep + 1;
    const int n_train = std::max(1, static_cast<int>(std::lround(cfg.train_fraction * n)));
    const int n_val = static_cast<int>(std::lround(cfg.validation_fraction * n));
    for (int k = 0; k < n; ++k) part[order[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    Split s;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (part[ds.episode[i]] == 0 ? s.train : part[ds.episode[i]] == 1 ? s.validation : s.test).push_back(i);
    }
    return s;
}

inline Scaler fit_scaler(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Scaler s;
    Vector sum = Vector::Zero(kFeatures), sq = Vector::Zero(kFeatures);
    double n = 0.0, ys = 0.0, yq = 0.0;
    for (auto i : rows) {
        for (Eigen::Index t = 0; t < ds.windows[i].rows(); ++t) {
            sum += ds.windows[i].row(t).transpose();
            sq += ds.windows[i].row(t).transpose().cwiseAbs2();
            n += 1.0;
        }
        ys += ds.targets[i];
        yq += ds.targets[i] * ds.targets[i];
    }
    if (n == 0.0) return s;
    s.mean = sum / n;
    for (int j = 0; j < kFeatures; ++j) {
        const double var = std::max(sq(j) / n - s.mean(j) * s.mean(j), 0.0);
        s.scale(j) = var > 1e-18 ? std::sqrt(var) : 1.0;
    }
    const double m = static_cast<double>(rows.size());
    s.y_mean = ys / m;
    const double yvar = std::max(yq / m - s.y_mean * s.y_mean, 0.0);
    s.y_scale = yvar > 1e-18 ? std::sqrt(yvar) : 1.0;
    return s;
}

namespace detail {

inline std::vector<Matrix> batch_inputs(const LstmModel& m, const Dataset& ds, const std::vector<std::size_t>& idx,
                                        std::size_t begin, std::size_t end) {
    const int steps = m.window_length();
    std::vector<Matrix> xs(steps, Matrix(kFeatures, static_cast<Eigen::Index>(end - begin)));
    for (std::size_t b = begin; b < end; ++b) {
        const auto& w = ds.windows[idx[b]];
        for (int t = 0; t < steps; ++t) {
            xs[t].col(b - begin) = ((w.row(t).transpose() - m.scaler.mean).array() / m.scaler.scale.array()).matrix();
        }
    }
    return xs;
}

/// Mean squared error in standardized target units.
inline double dataset_loss(const LstmModel& m, const Dataset& ds, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < idx.size(); b += 512) {
        const std::size_t e = std::min(idx.size(), b + 512);
        const auto y = forward(m.weights, batch_inputs(m, ds, idx, b, e), nullptr);
        for (std::size_t k = b; k < e; ++k) {
            const double r = y(k - b) - (ds.targets[idx[k]] - m.scaler.y_mean) / m.scaler.y_scale;
            total += r * r;
        }
    }
    return total / idx.size();
}

}  // namespace detail

/// Scalers fitted on the training split and Glorot-initialized weights.
inline LstmModel initial_model(const Dataset& ds, const TrainConfig& cfg) {
    LstmModel m;
    m.sequence_length = ds.sequence_length;
    m.scaler = fit_scaler(ds, split_dataset(ds, cfg).train);
    m.weights = LstmWeights::glorot(cfg.units, cfg.layers, cfg.seed);
    return m;
}

/// Minibatch Adam on the MSE; returns the weights with the best validation loss.
inline LstmModel train(const Dataset& ds, const TrainConfig& cfg, TrainReport* report = nullptr) {
    if (ds.size() == 0) throw InvalidArgument("train: empty dataset");
    const auto split = split_dataset(ds, cfg);
    LstmModel m = initial_model(ds, cfg);
    LstmModel best = m;
    double best_val = std::numeric_limits<double>::infinity();
    TrainReport rep;
    rep.train_windows = split.train.size();
    rep.validation_windows = split.validation.size();
    rep.test_windows = split.test.size();
    const auto& val_idx = split.validation.empty() ? split.train : split.validation;

    Adam opt(cfg.learning_rate);
    LstmWeights grad = LstmWeights::zeros(cfg.units, cfg.layers);
    std::mt19937_64 rng(cfg.seed + 17);
    std::vector<std::size_t> order = split.train;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const auto xs = detail::batch_inputs(m, ds, order, b, e);
            detail::ForwardCache cache;
            const auto y = detail::forward(m.weights, xs, &cache);
            Eigen::RowVectorXd dy(y.size());
            double loss = 0.0;
            for (Eigen::Index k = 0; k < y.size(); ++k) {
                const double r = y(k) - (ds.targets[order[b + k]] - m.scaler.y_mean) / m.scaler.y_scale;
                loss += r * r;
                dy(k) = 2.0 * r / y.size();
            }
            loss /= y.size();
            if (!std::isfinite(loss)) throw DivergenceError("train: loss became non-finite");
            grad.set_zero();
            detail::backward(m.weights, cache, dy, &grad, nullptr);
            opt.step(m.weights.blocks(grad));
            epoch_loss += loss;
            ++batches;
        }
        rep.train_loss.push_back(epoch_loss / std::max(batches, 1));
        const double v = detail::dataset_loss(m, ds, val_idx);
        if (!std::isfinite(v)) throw DivergenceError("train: validation loss became non-finite");
        rep.validation_loss.push_back(v);
        if (v < best_val) {
            best_val = v;
            best = m;
            rep.best_epoch = epoch;
        }
    }
    if (cfg.epochs == 0) best = m;
    rep.test_loss = detail::dataset_loss(best, ds, split.test);
    if (report) *report = rep;
    return best;
}

// ---------------------------------------------------------------------------
// Evaluation against the simulator
// ---------------------------------------------------------------------------

struct RolloutAccuracy {
    double rmse = 0.0;
    double r2 = 0.0;
    std::vector<double> truth, predicted;
};

/// Rolls the model over held-out open-loop episodes: the first l days seed
/// the history, then `horizon` days are predicted recursively.
inline RolloutAccuracy rollout_accuracy(const LstmModel& m, const agrohydro::RichardsColumn& column,
                                        GenerationRanges ranges, int episodes, int horizon, std::uint64_t seed) {
    ranges.days = m.sequence_length + horizon;
    RolloutAccuracy acc;
    for (int e = 0; e < episodes; ++e) {
        const auto ep = simulate_episode(column, ranges, episode_seed(seed, e));
        const int l = m.sequence_length;
        const Matrix past = ep.records.topRows(l);
        const double y0 = ep.records(l, kY);
        const Matrix forcing = ep.records.block(l, 1, horizon, 4);
        const auto pred = rollout(m, past, y0, forcing, horizon);
        for (int k = 0; k < horizon; ++k) {
            acc.truth.push_back(ep.next[l + k]);
            acc.predicted.push_back(pred[k]);
        }
    }
    acc.rmse = rmse(acc.truth, acc.predicted);
    acc.r2 = r2(acc.truth, acc.predicted);
    return acc;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json mat_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix json_mat(const nlohmann::json& j) {
    const auto d = j.at("data").get<std::vector<double>>();
    const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(d.size()) != r * c) throw ParseError("matrix size mismatch", 0);
    return Eigen::Map<const Matrix>(d.data(), r, c);
}

inline std::vector<double> vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }
inline Vector unvec(const nlohmann::json& j) {
    const auto d = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const LstmModel& m) {
    nlohmann::json j;
    j["format"] = "irrisched-lstm";
    j["version"] = 1;
    j["sequence_length"] = m.sequence_length;
    j["units"] = m.weights.units;
    j["scaler"] = {{"mean", detail::vec(m.scaler.mean)},
                   {"scale", detail::vec(m.scaler.scale)},
                   {"y_mean", m.scaler.y_mean},
                   {"y_scale", m.scaler.y_scale}};
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& l : m.weights.layers) {
        layers.push_back({{"w", detail::mat_json(l.w)}, {"u", detail::mat_json(l.u)}, {"b", detail::vec(l.b)}});
    }
    j["w_y"] = detail::vec(m.weights.w_y);
    j["b_y"] = m.weights.b_y;
    return j;
}

inline LstmModel lstm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "irrisched-lstm" || j.at("version") != 1) throw ParseError("not an LSTM checkpoint", 0);
        LstmModel m;
        m.sequence_length = j.at("sequence_length");
        m.weights.units = j.at("units");
        const auto& s = j.at("scaler");
        m.scaler.mean = detail::unvec(s.at("mean"));
        m.scaler.scale = detail::unvec(s.at("scale"));
        m.scaler.y_mean = s.at("y_mean");
        m.scaler.y_scale = s.at("y_scale");
        for (const auto& l : j.at("layers")) {
            m.weights.layers.push_back({detail::json_mat(l.at("w")), detail::json_mat(l.at("u")), detail::unvec(l.at("b"))});
        }
        m.weights.w_y = detail::unvec(j.at("w_y"));
        m.weights.b_y = j.at("b_y");
        if (!m.weights.finite()) throw ParseError("non-finite weights", 0);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("LSTM checkpoint: ") + e.what(), 0);
    }
}

inline void save(const LstmModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << to_json(m).dump();
}

inline LstmModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    return lstm_from_json(nlohmann::json::parse(in));
}

}  // namespace irrisched::surrogate
