/**
 * @file adam.hpp
 * @brief Adam optimizer over a list of flat parameter blocks
 */

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "errors.hpp"

namespace irrisched {

/// A parameter array and its gradient, both of length `size`.
struct ParamBlock {
    double* value;
    const double* grad;
    Eigen::Index size;
};

class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7)
        : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

    /// One descent step. Block layout must not change between calls.
    void step(const std::vector<ParamBlock>& blocks) {
        if (m_.empty()) {
            for (const auto& b : blocks) {
                m_.push_back(Eigen::VectorXd::Zero(b.size));
                v_.push_back(Eigen::VectorXd::Zero(b.size));
            }
        }
        if (m_.size() != blocks.size()) throw InvalidArgument("Adam: parameter layout changed");
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t k = 0; k < blocks.size(); ++k) {
            Eigen::Map<Eigen::VectorXd> p(blocks[k].value, blocks[k].size);
            Eigen::Map<const Eigen::VectorXd> g(blocks[k].grad, blocks[k].size);
            m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
            v_[k] = b2_ * v_[k] + (1.0 - b2_) * g.cwiseAbs2();
            p.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
        }
    }

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    long steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Eigen::VectorXd> m_, v_;
};

}  // namespace irrisched
