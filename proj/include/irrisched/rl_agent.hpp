/**
 * @file rl_agent.hpp
 * @brief PPO agent per zone: binary irrigation decision plus squashed
 *        Gaussian rate, shared tanh trunk, GAE and clipped updates
 *
 * The reward is the negative daily cost with a linear zone penalty:
 *
 *   r = -(Qup * max(theta - upper, 0) + Qlo * max(lower - theta, 0))
 *       - Rc * c - Ru * u / 1000
 *
 * The rate is u = u_min + (u_max - u_min) * (tanh(z) + 1) / 2 for the
 * Gaussian sample z, and 0 when c = 0. The joint log-probability is
 * log p(c) + [c = 1] (log N(z) - log |du/dz|).
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
#include <vector>

#include "adam.hpp"
#include "agrohydro.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "mpc.hpp"

namespace irrisched::rl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double reward(double theta_rz, int c, double u, const mpc::MpcParams& p) {
    const double above = std::max(theta_rz - p.tz.upper, 0.0);
    const double below = std::max(p.tz.lower - theta_rz, 0.0);
    return -(p.q_upper * above + p.q_lower * below) - p.r_c * c - p.water_cost_per_mm() * u;
}

/// Moisture profile plus the day's ET0, Kc and rooting depth.
struct Observation {
    std::vector<double> theta_profile;
    double et0 = 0.0;
    double kc = 0.0;
    double z_r = 0.5;

    Vector to_vector() const {
        Vector v(theta_profile.size() + 3);
        for (std::size_t i = 0; i < theta_profile.size(); ++i) v(i) = theta_profile[i];
        v.tail(3) << et0, kc, z_r;
        return v;
    }
};

struct PpoHyper {
    int horizon = 30;
    double learning_rate = 1e-4;
    int minibatch = 64;
    int epochs = 10;
    double gamma = 0.99;
    double lambda = 0.97;
    double clip = 0.25;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    int episodes = 5000;
    int episodes_per_update = 20;
    double reward_scale = 1e-6;  ///< rewards are scaled for the optimizer only
    int hidden = 64;
    unsigned workers = 1;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("PpoHyper: gamma must lie in (0, 1]");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("PpoHyper: lambda must lie in [0, 1]");
        if (!(clip > 0.0)) throw InvalidArgument("PpoHyper: clip must be positive");
        if (horizon < 1 || minibatch < 1 || epochs < 0 || episodes_per_update < 1) {
            throw InvalidArgument("PpoHyper: sizes must be positive");
        }
    }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Shared two-layer tanh trunk with categorical, Gaussian-mean and value heads.
struct PolicyNet {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
    Matrix w_logits;  ///< 2 x H
    Vector b_logits;
    Vector w_mean;
    double b_mean = 0.0;
    Vector w_value;
    double b_value = 0.0;
    double log_std = 0.0;

    Vector obs_mean;
    Vector obs_scale;
    double u_min = 4.0;
    double u_max = 52.0;

    int obs_dim() const { return static_cast<int>(w1.cols()); }
    int hidden() const { return static_cast<int>(w1.rows()); }

    static PolicyNet zeros(int obs_dim, int hidden) {
        PolicyNet n;
        n.w1 = Matrix::Zero(hidden, obs_dim);
        n.b1 = Vector::Zero(hidden);
        n.w2 = Matrix::Zero(hidden, hidden);
        n.b2 = Vector::Zero(hidden);
        n.w_logits = Matrix::Zero(2, hidden);
        n.b_logits = Vector::Zero(2);
        n.w_mean = Vector::Zero(hidden);
        n.w_value = Vector::Zero(hidden);
        n.obs_mean = Vector::Zero(obs_dim);
        n.obs_scale = Vector::Ones(obs_dim);
        return n;
    }

    /// Glorot trunk; policy heads start small so the initial policy is near uniform.
    static PolicyNet init(int obs_dim, int hidden, std::uint64_t seed) {
        auto n = zeros(obs_dim, hidden);
        std::mt19937_64 rng(seed);
        auto fill = [&](auto& m, double gain) {
            const double a = gain * std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
            std::uniform_real_distribution<double> u(-a, a);
            for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
        };
        fill(n.w1, 1.0);
        fill(n.w2, 1.0);
        fill(n.w_logits, 0.01);
        fill(n.w_mean, 0.01);
        fill(n.w_value, 1.0);
        return n;
    }

    void set_zero() {
        w1.setZero();
        b1.setZero();
        w2.setZero();
        b2.setZero();
        w_logits.setZero();
        b_logits.setZero();
        w_mean.setZero();
        b_mean = 0.0;
        w_value.setZero();
        b_value = 0.0;
        log_std = 0.0;
    }

    std::vector<ParamBlock> blocks(const PolicyNet& g) {
        return {{w1.data(), g.w1.data(), w1.size()},
                {b1.data(), g.b1.data(), b1.size()},
                {w2.data(), g.w2.data(), w2.size()},
                {b2.data(), g.b2.data(), b2.size()},
                {w_logits.data(), g.w_logits.data(), w_logits.size()},
                {b_logits.data(), g.b_logits.data(), b_logits.size()},
                {w_mean.data(), g.w_mean.data(), w_mean.size()},
                {&b_mean, &g.b_mean, 1},
                {w_value.data(), g.w_value.data(), w_value.size()},
                {&b_value, &g.b_value, 1},
                {&log_std, &g.log_std, 1}};
    }

    bool finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w_logits.allFinite() &&
               b_logits.allFinite() && w_mean.allFinite() && std::isfinite(b_mean) && w_value.allFinite() &&
               std::isfinite(b_value) && std::isfinite(log_std);
    }

    double clamped_log_std() const { return std::clamp(log_std, kLogStdMin, kLogStdMax); }

    double squash(double z) const { return u_min + (u_max - u_min) * 0.5 * (std::tanh(z) + 1.0); }
};

struct NetOutput {
    Vector x, h1, h2;
    Eigen::Vector2d logits;
    Eigen::Vector2d probs;
    double mean = 0.0;
    double value = 0.0;
};

inline NetOutput net_forward(const PolicyNet& n, const Vector& raw_obs) {
    NetOutput o;
    o.x = ((raw_obs - n.obs_mean).array() / n.obs_scale.array()).matrix();
    o.h1 = (n.w1 * o.x + n.b1).array().tanh();
    o.h2 = (n.w2 * o.h1 + n.b2).array().tanh();
    o.logits = n.w_logits * o.h2 + n.b_logits;
    const double mx = o.logits.maxCoeff();
    o.probs = (o.logits.array() - mx).exp();
    o.probs /= o.probs.sum();
    o.mean = n.w_mean.dot(o.h2) + n.b_mean;
    o.value = n.w_value.dot(o.h2) + n.b_value;
    return o;
}

struct Action {
    int c = 0;
    double u = 0.0;        ///< mm/day
    double z = 0.0;        ///< pre-squash Gaussian sample
    double log_prob = 0.0; ///< joint, with the squash correction
    double value = 0.0;
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Squash-corrected log-density of the rate given the pre-squash sample.
inline double rate_log_density(const PolicyNet& n, double z, double mean) {
    const double ls = n.clamped_log_std();
    const double s = std::exp(ls);
    const double gauss = -0.5 * (z - mean) * (z - mean) / (s * s) - ls - kHalfLog2Pi;
    const double t = std::tanh(z);
    const double jac = 0.5 * (n.u_max - n.u_min) * std::max(1.0 - t * t, 1e-300);
    return gauss - std::log(jac);
}

/// Samples an action, or takes argmax/mean when `rng` is null.
template <class Rng = std::mt19937_64>
Action policy_act(const PolicyNet& n, const Observation& obs, Rng* rng = nullptr) {
    const auto o = net_forward(n, obs.to_vector());
    Action a;
    a.value = o.value;
    if (rng) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        a.c = unit(*rng) < o.probs(1) ? 1 : 0;
        std::normal_distribution<double> g(0.0, 1.0);
        a.z = o.mean + std::exp(n.clamped_log_std()) * g(*rng);
    } else {
        a.c = o.probs(1) > o.probs(0) ? 1 : 0;
        a.z = o.mean;
    }
    a.log_prob = std::log(std::max(o.probs(a.c), 1e-300));
    if (a.c == 1) {
        a.u = n.squash(a.z);
        a.log_prob += rate_log_density(n, a.z, o.mean);
    }
    return a;
}

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

inline GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, double bootstrap_value,
                     double gamma, double lambda) {
    if (rewards.size() != values.size()) throw InvalidArgument("gae: rewards and values differ in length");
    const std::size_t n = rewards.size();
    GaeResult r;
    r.advantages.assign(n, 0.0);
    r.returns.assign(n, 0.0);
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double next = t + 1 < n ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        r.advantages[t] = acc;
        r.returns[t] = acc + values[t];
    }
    return r;
}

struct Transition {
    Vector obs;  ///< raw observation
    int c = 0;
    double z = 0.0;
    double log_prob = 0.0;  ///< behaviour policy, joint
    double value = 0.0;
    double advantage = 0.0;
    double ret = 0.0;
};

struct LossParts {
    double total = 0.0;
    double policy = 0.0;   ///< negative clipped surrogate
    double value = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
};

/// Mean PPO loss over a minibatch (to be minimized) and its gradient.
inline LossParts ppo_loss(const PolicyNet& n, const std::vector<const Transition*>& batch, const PpoHyper& h,
                          PolicyNet* grad) {
    LossParts L;
    if (grad) grad->set_zero();
    const double inv = 1.0 / static_cast<double>(batch.size());
    const double ls = n.clamped_log_std();
    const bool ls_free = n.log_std > kLogStdMin && n.log_std < kLogStdMax;
    const double var = std::exp(2.0 * ls);
    const double gauss_entropy = 0.5 + kHalfLog2Pi + ls;
    for (const Transition* t : batch) {
        const auto o = net_forward(n, t->obs);
        double logp = std::log(std::max(o.probs(t->c), 1e-300));
        if (t->c == 1) logp += rate_log_density(n, t->z, o.mean);
        const double ratio = std::exp(logp - t->log_prob);
        const double A = t->advantage;
        const double clipped = std::clamp(ratio, 1.0 - h.clip, 1.0 + h.clip);
        const bool clip_active = (A > 0 && ratio > 1.0 + h.clip) || (A < 0 && ratio < 1.0 - h.clip);
        L.policy -= std::min(ratio * A, clipped * A) * inv;
        L.clip_fraction += clip_active ? inv : 0.0;
        const double verr = o.value - t->ret;
        L.value += h.value_coef * verr * verr * inv;
        const double cat_entropy = -(o.probs.array() * o.probs.array().max(1e-300).log()).sum();
        L.entropy += (cat_entropy + gauss_entropy) * inv;
        if (!grad) continue;

        // d loss / d head outputs for this sample
        const double dlogp = clip_active ? 0.0 : -A * ratio * inv;
        Eigen::Vector2d dlogits = Eigen::Vector2d::Zero();
        dlogits(t->c) += dlogp;
        dlogits -= dlogp * o.probs;
        // entropy gradient: dH/dl_j = -p_j (log p_j + H)
        for (int j = 0; j < 2; ++j) {
            const double lp = std::log(std::max(o.probs(j), 1e-300));
            dlogits(j) -= h.entropy_coef * inv * (-o.probs(j) * (lp + cat_entropy));
        }
        double dmean = 0.0;
        if (t->c == 1) {
            dmean = dlogp * (t->z - o.mean) / var;
            if (ls_free) grad->log_std += dlogp * ((t->z - o.mean) * (t->z - o.mean) / var - 1.0);
        }
        if (ls_free) grad->log_std -= h.entropy_coef * inv;
        const double dvalue = 2.0 * h.value_coef * verr * inv;

        grad->w_logits += dlogits * o.h2.transpose();
        grad->b_logits += dlogits;
        grad->w_mean += dmean * o.h2;
        grad->b_mean += dmean;
        grad->w_value += dvalue * o.h2;
        grad->b_value += dvalue;
        Vector dh2 = n.w_logits.transpose() * dlogits + dmean * n.w_mean + dvalue * n.w_value;
        Vector da2 = dh2.array() * (1.0 - o.h2.array().square());
        grad->w2 += da2 * o.h1.transpose();
        grad->b2 += da2;
        Vector da1 = (n.w2.transpose() * da2).array() * (1.0 - o.h1.array().square());
        grad->w1 += da1 * o.x.transpose();
        grad->b1 += da1;
    }
    L.total = L.policy + L.value - h.entropy_coef * L.entropy;
    if (!std::isfinite(L.total)) throw NonFiniteLoss("ppo: loss is not finite");
    return L;
}

/// `epochs` passes of shuffled minibatches with advantage normalization.
inline LossParts ppo_update(PolicyNet& n, std::vector<Transition> batch, const PpoHyper& h, Adam& opt,
                            std::mt19937_64& rng) {
    double mean = 0.0, sq = 0.0;
    for (const auto& t : batch) mean += t.advantage;
    mean /= batch.size();
    for (const auto& t : batch) sq += (t.advantage - mean) * (t.advantage - mean);
    const double sd = std::sqrt(sq / batch.size());
    for (auto& t : batch) t.advantage = sd > 1e-12 ? (t.advantage - mean) / (sd + 1e-8) : 0.0;

    PolicyNet grad = n;
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    LossParts last;
    for (int e = 0; e < h.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += h.minibatch) {
            std::vector<const Transition*> mb;
            for (std::size_t k = b; k < std::min(order.size(), b + h.minibatch); ++k) mb.push_back(&batch[order[k]]);
            last = ppo_loss(n, mb, h, &grad);
            opt.step(n.blocks(grad));
            n.log_std = std::clamp(n.log_std, kLogStdMin, kLogStdMax);
            if (!n.finite()) throw NonFiniteLoss("ppo: parameters became non-finite");
        }
    }
    return last;
}

// ---------------------------------------------------------------------------
// Environment and training
// ---------------------------------------------------------------------------

/// Training environment of one zone: Richards column, costs, forcing ranges.
struct ZoneEnv {
    const agrohydro::RichardsColumn* column = nullptr;
    mpc::MpcParams costs;
    Range et0{0.1, 8.99};
    Range kc{0.4, 1.02};
    std::vector<double> root_depths{0.5, 1.0};
    Range initial_theta{0.12, 0.28};  ///< episode start, root-zone moisture
    double noise_std = 0.0005;

    static ZoneEnv for_zone(const agrohydro::RichardsColumn& col, const ZoneSpec& z, double mad) {
        ZoneEnv e;
        e.column = &col;
        e.costs.tz = target_zone(z, mad);
        e.costs.u_min = z.irrigation.lo;
        e.costs.u_max = z.irrigation.hi;
        e.initial_theta = {z.theta_pwp, z.theta_fc};
        return e;
    }
};

struct EpisodeData {
    std::vector<Transition> steps;
    std::vector<double> rewards;  ///< unscaled
    double bootstrap_value = 0.0;
    double total_reward = 0.0;
};

inline Observation observe(const agrohydro::RichardsColumn& col, const agrohydro::SoilColumnState& s, double et0,
                           double kc, double z_r) {
    return {col.theta_profile(s), et0, kc, z_r};
}

/// One episode of T days. With `random_actions` the behaviour is uniform
/// (used to fit observation scalers).
inline EpisodeData run_episode(const PolicyNet& net, const ZoneEnv& env, int horizon, std::uint64_t seed,
                               bool random_actions = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](Range r) { return r.lo + (r.hi - r.lo) * unit(rng); };
    const auto& col = *env.column;
    const double z_r = env.root_depths[static_cast<std::size_t>(unit(rng) * env.root_depths.size()) %
                                       env.root_depths.size()];
    auto state = col.hydrostatic_for_root_zone(draw(env.initial_theta), z_r);
    double et0 = draw(env.et0), kc = draw(env.kc);
    EpisodeData ep;
    for (int t = 0; t < horizon; ++t) {
        const auto obs = observe(col, state, et0, kc, z_r);
        Action a;
        if (random_actions) {
            a.c = unit(rng) < 0.5;
            a.u = a.c ? draw({env.costs.u_min, env.costs.u_max}) : 0.0;
        } else {
            a = policy_act(net, obs, &rng);
        }
        agrohydro::DailyForcing f;
        f.irrigation = a.u;
        f.et0 = et0;
        f.kc = kc;
        f.z_r = z_r;
        state = col.simulate_day(state, f, env.noise_std, rng).state;
        const double r = reward(col.root_zone_moisture(state, z_r), a.c, a.u, env.costs);
        Transition tr;
        tr.obs = obs.to_vector();
        tr.c = a.c;
        tr.z = a.z;
        tr.log_prob = a.log_prob;
        tr.value = a.value;
        ep.steps.push_back(std::move(tr));
        ep.rewards.push_back(r);
        ep.total_reward += r;
        et0 = draw(env.et0);
        kc = draw(env.kc);
    }
    ep.bootstrap_value = net_forward(net, observe(col, state, et0, kc, z_r).to_vector()).value;
    return ep;
}

struct TrainingCurve {
    std::vector<double> episode_rewards;  ///< unscaled total per episode

    /// Mean episodic reward per consecutive window.
    std::vector<double> windows(int size = 100) const {
        std::vector<double> out;
        for (std::size_t b = 0; b + size <= episode_rewards.size(); b += size) {
            out.push_back(std::accumulate(episode_rewards.begin() + b, episode_rewards.begin() + b + size, 0.0) / size);
        }
        return out;
    }

    /// Mean over the first or last `fraction` of episodes.
    double head_mean(double fraction) const {
        const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * episode_rewards.size()));
        return std::accumulate(episode_rewards.begin(), episode_rewards.begin() + n, 0.0) / n;
    }
    double tail_mean(double fraction) const {
        const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * episode_rewards.size()));
        return std::accumulate(episode_rewards.end() - n, episode_rewards.end(), 0.0) / n;
    }

    void write_csv(std::ostream& out, int size = 100) const {
        out << "episode_window,mean_reward\n";
        const auto w = windows(size);
        for (std::size_t k = 0; k < w.size(); ++k) out << k << ',' << w[k] << '\n';
    }
};

inline void fit_observation_scaler(PolicyNet& net, const std::vector<EpisodeData>& eps) {
    const int d = net.obs_dim();
    Vector sum = Vector::Zero(d), sq = Vector::Zero(d);
    double count = 0.0;
    for (const auto& ep : eps) {
        for (const auto& t : ep.steps) {
            sum += t.obs;
            sq += t.obs.cwiseAbs2();
            count += 1.0;
        }
    }
    net.obs_mean = sum / count;
    for (int j = 0; j < d; ++j) {
        const double v = std::max(sq(j) / count - net.obs_mean(j) * net.obs_mean(j), 0.0);
        net.obs_scale(j) = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
}

inline std::vector<EpisodeData> collect(const PolicyNet& net, const ZoneEnv& env, int horizon, std::uint64_t seed,
                                        int first_episode, int count, unsigned workers, bool random_actions = false) {
    std::vector<EpisodeData> eps(count);
    auto work = [&](unsigned w) {
        for (int k = static_cast<int>(w); k < count; k += static_cast<int>(workers)) {
            eps[k] = run_episode(net, env, horizon, surrogate::episode_seed(seed, first_episode + k), random_actions);
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::future<void>> fs;
        for (unsigned w = 0; w < workers; ++w) fs.push_back(std::async(std::launch::async, work, w));
        for (auto& f : fs) f.get();
    }
    return eps;
}

/// PPO against the zone's Richards column. Results depend only on the seed.
inline PolicyNet train_agent(const ZoneEnv& env, const PpoHyper& h, std::uint64_t seed,
                             TrainingCurve* curve = nullptr) {
    h.validate();
    if (!env.column) throw InvalidArgument("train_agent: no simulator");
    const int obs_dim = static_cast<int>(env.column->grid().node_count()) + 3;
    PolicyNet net = PolicyNet::init(obs_dim, h.hidden, seed);
    net.u_min = env.costs.u_min;
    net.u_max = env.costs.u_max;
    fit_observation_scaler(net, collect(net, env, h.horizon, seed ^ 0xabcdefULL, 0, h.episodes_per_update,
                                        h.workers, true));
    Adam opt(h.learning_rate, 0.9, 0.999, 1e-8);
    std::mt19937_64 rng(seed + 1);
    TrainingCurve local;
    for (int done = 0; done < h.episodes;) {
        const int count = std::min(h.episodes_per_update, h.episodes - done);
        auto eps = collect(net, env, h.horizon, seed, done, count, h.workers);
        std::vector<Transition> batch;
        for (auto& ep : eps) {
            std::vector<double> scaled(ep.rewards.size()), values;
            for (std::size_t t = 0; t < ep.rewards.size(); ++t) {
                scaled[t] = ep.rewards[t] * h.reward_scale;
                values.push_back(ep.steps[t].value);
            }
            const auto g = gae(scaled, values, ep.bootstrap_value, h.gamma, h.lambda);
            for (std::size_t t = 0; t < ep.steps.size(); ++t) {
                ep.steps[t].advantage = g.advantages[t];
                ep.steps[t].ret = g.returns[t];
                batch.push_back(std::move(ep.steps[t]));
            }
            local.episode_rewards.push_back(ep.total_reward);
        }
        ppo_update(net, std::move(batch), h, opt, rng);
        done += count;
    }
    if (curve) *curve = std::move(local);
    return net;
}

/// Deterministic policy rollout over the horizon against a noise-free copy of
/// the zone simulator driven by the forecast. Rates seed the MPC.
struct DecisionSequence {
    std::vector<int> c;
    std::vector<double> u;
};

inline DecisionSequence evaluate_sequence(const PolicyNet& net, const agrohydro::RichardsColumn& column,
                                          agrohydro::SoilColumnState state, const mpc::Forecast& forecast, int horizon) {
    if (horizon < 1) throw InvalidArgument("evaluate_sequence: horizon must be at least 1");
    forecast.validate(horizon);
    DecisionSequence seq;
    for (int k = 0; k < horizon; ++k) {
        const auto a = policy_act(net, observe(column, state, forecast.et0[k], forecast.kc[k], forecast.z_r[k]));
        seq.c.push_back(a.c);
        seq.u.push_back(a.u);
        if (k + 1 < horizon) {
            agrohydro::DailyForcing f;
            f.irrigation = a.u;
            f.rain = forecast.rain[k];
            f.et0 = forecast.et0[k];
            f.kc = forecast.kc[k];
            f.z_r = forecast.z_r[k];
            state = column.simulate_day(state, f).state;
        }
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
inline void unflat(const nlohmann::json& j, Matrix& m) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != m.size()) throw ParseError("policy checkpoint: shape mismatch", 0);
    m = Eigen::Map<const Matrix>(v.data(), m.rows(), m.cols());
}
inline void unflat(const nlohmann::json& j, Vector& m) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != m.size()) throw ParseError("policy checkpoint: shape mismatch", 0);
    m = Eigen::Map<const Vector>(v.data(), m.size());
}
}  // namespace detail

inline nlohmann::json to_json(const PolicyNet& n) {
    using detail::flat;
    return {{"format", "irrisched-policy"}, {"version", 1}, {"obs_dim", n.obs_dim()}, {"hidden", n.hidden()},
            {"w1", flat(n.w1)}, {"b1", flat(n.b1)}, {"w2", flat(n.w2)}, {"b2", flat(n.b2)},
            {"w_logits", flat(n.w_logits)}, {"b_logits", flat(n.b_logits)}, {"w_mean", flat(n.w_mean)},
            {"b_mean", n.b_mean}, {"w_value", flat(n.w_value)}, {"b_value", n.b_value}, {"log_std", n.log_std},
            {"obs_mean", flat(n.obs_mean)}, {"obs_scale", flat(n.obs_scale)}, {"u_min", n.u_min},
            {"u_max", n.u_max}};
}

inline PolicyNet policy_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "irrisched-policy" || j.at("version") != 1) {
            throw ParseError("not a policy checkpoint", 0);
        }
        auto n = PolicyNet::zeros(j.at("obs_dim"), j.at("hidden"));
        detail::unflat(j.at("w1"), n.w1);
        detail::unflat(j.at("b1"), n.b1);
        detail::unflat(j.at("w2"), n.w2);
        detail::unflat(j.at("b2"), n.b2);
        detail::unflat(j.at("w_logits"), n.w_logits);
        detail::unflat(j.at("b_logits"), n.b_logits);
        detail::unflat(j.at("w_mean"), n.w_mean);
        detail::unflat(j.at("w_value"), n.w_value);
        detail::unflat(j.at("obs_mean"), n.obs_mean);
        detail::unflat(j.at("obs_scale"), n.obs_scale);
        n.b_mean = j.at("b_mean");
        n.b_value = j.at("b_value");
        n.log_std = j.at("log_std");
        n.u_min = j.at("u_min");
        n.u_max = j.at("u_max");
        if (!n.finite()) throw ParseError("policy checkpoint: non-finite parameters", 0);
        return n;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("policy checkpoint: ") + e.what(), 0);
    }
}

inline void save(const PolicyNet& n, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << to_json(n).dump();
}

inline PolicyNet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    return policy_from_json(nlohmann::json::parse(in));
}

}  // namespace irrisched::rl
