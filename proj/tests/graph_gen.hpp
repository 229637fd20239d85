#pragma once

// Deterministic random-graph generator for gradient soundness checks. A plan
// is a seeded sequence of smooth tape ops ending in sum(); the same plan can
// be replayed value-only (for the finite-difference oracle) or recorded (for
// autodiff gradients).

#include <cstdint>
#include <vector>

#include "vlx/rng.hpp"
#include "vlx/tensor.hpp"

namespace vlx::testing {

struct GraphPlan {
    enum class Op { Matmul, AddBias, MulConst, Gelu, Normalize, MeanPool, Softmax, Scale, Transpose };
    struct Step {
        Op op;
        Tensor constant;  // weight/bias operand where applicable
        double factor = 1.0;
    };

    std::size_t in_rows = 0;
    std::size_t in_cols = 0;
    std::vector<double> input;
    std::vector<Step> steps;

    Tensor run(Tape& tape, const Tensor& x) const {
        Tensor cur = x;
        for (const auto& s : steps) {
            switch (s.op) {
                case Op::Matmul: cur = tape.matmul(cur, s.constant); break;
                case Op::AddBias: cur = tape.add(cur, s.constant); break;
                case Op::MulConst: cur = tape.mul(cur, s.constant); break;
                case Op::Gelu: cur = tape.gelu(cur); break;
                case Op::Normalize: cur = tape.l2_normalize_rows(cur); break;
                case Op::MeanPool: cur = tape.mean_pool_rows(cur); break;
                case Op::Softmax: cur = tape.softmax_rows(cur); break;
                case Op::Scale: cur = tape.scale(cur, s.factor); break;
                case Op::Transpose: cur = tape.transpose(cur); break;
            }
        }
        return tape.sum(cur);
    }

    double value(const std::vector<double>& x_values) const {
        Tape tape(Tape::kNoGrad);
        Tensor x = Tensor::from_data(in_rows, in_cols, x_values, false);
        return run(tape, x).item();
    }

    std::vector<double> autodiff_grad() const {
        Tape tape;
        Tensor x = Tensor::from_data(in_rows, in_cols, input, true);
        Tensor loss = run(tape, x);
        tape.backward(loss);
        return x.grad();
    }
};

// rows/cols of 0 mean "pick"; a non-null shared_input pins the input values
// so two plans can be composed over one tensor.
inline GraphPlan make_graph_plan(std::uint64_t seed, std::size_t rows = 0, std::size_t cols = 0,
                                 const std::vector<double>* shared_input = nullptr) {
    Rng rng(seed);
    GraphPlan plan;
    plan.in_rows = rows ? rows : static_cast<std::size_t>(rng.uniform_int(2, 4));
    plan.in_cols = cols ? cols : static_cast<std::size_t>(rng.uniform_int(3, 5));
    if (shared_input) {
        plan.input = *shared_input;
    } else {
        plan.input.resize(plan.in_rows * plan.in_cols);
        for (auto& v : plan.input) v = rng.normal(0.0, 1.0);
    }

    // Track concrete values while planning so ill-conditioned ops
    // (near-zero rows under normalize) are skipped deterministically.
    Tensor cur = Tensor::from_data(plan.in_rows, plan.in_cols, plan.input, false);

    const int depth = static_cast<int>(rng.uniform_int(3, 6));
    for (int d = 0; d < depth; ++d) {
        const int pick = static_cast<int>(rng.uniform_int(0, 8));
        GraphPlan::Step step;
        switch (pick) {
            case 0: {
                const std::size_t out_cols = static_cast<std::size_t>(rng.uniform_int(2, 5));
                std::vector<double> w(cur.cols() * out_cols);
                for (auto& v : w) v = rng.normal(0.0, 1.0 / std::sqrt(double(cur.cols())));
                step.op = GraphPlan::Op::Matmul;
                step.constant = Tensor::from_data(cur.cols(), out_cols, std::move(w), false);
                break;
            }
            case 1: {
                std::vector<double> b(cur.cols());
                for (auto& v : b) v = rng.normal(0.0, 0.5);
                step.op = GraphPlan::Op::AddBias;
                step.constant = Tensor::from_data(1, cur.cols(), std::move(b), false);
                break;
            }
            case 2: {
                std::vector<double> c(cur.numel());
                for (auto& v : c) v = rng.normal(1.0, 0.5);
                step.op = GraphPlan::Op::MulConst;
                step.constant = Tensor::from_data(cur.rows(), cur.cols(), std::move(c), false);
                break;
            }
            case 3: step.op = GraphPlan::Op::Gelu; break;
            case 4: {
                // Skip if some current row is too close to the origin.
                bool safe = cur.cols() >= 2;
                for (std::size_t r = 0; safe && r < cur.rows(); ++r) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < cur.cols(); ++c) s += cur.at(r, c) * cur.at(r, c);
                    if (std::sqrt(s) < 0.2) safe = false;
                }
                step.op = safe ? GraphPlan::Op::Normalize : GraphPlan::Op::Gelu;
                break;
            }
            case 5: step.op = GraphPlan::Op::MeanPool; break;
            case 6: step.op = GraphPlan::Op::Softmax; break;
            case 7:
                step.op = GraphPlan::Op::Scale;
                step.factor = rng.uniform(0.5, 2.0);
                break;
            default: step.op = GraphPlan::Op::Transpose; break;
        }
        plan.steps.push_back(step);
        // Advance the probe value.
        Tape t2(Tape::kNoGrad);
        Tensor x = Tensor::from_data(plan.in_rows, plan.in_cols, plan.input, false);
        Tensor out = x;
        for (const auto& s : plan.steps) {
            switch (s.op) {
                case GraphPlan::Op::Matmul: out = t2.matmul(out, s.constant); break;
                case GraphPlan::Op::AddBias: out = t2.add(out, s.constant); break;
                case GraphPlan::Op::MulConst: out = t2.mul(out, s.constant); break;
                case GraphPlan::Op::Gelu: out = t2.gelu(out); break;
                case GraphPlan::Op::Normalize: out = t2.l2_normalize_rows(out); break;
                case GraphPlan::Op::MeanPool: out = t2.mean_pool_rows(out); break;
                case GraphPlan::Op::Softmax: out = t2.softmax_rows(out); break;
                case GraphPlan::Op::Scale: out = t2.scale(out, s.factor); break;
                case GraphPlan::Op::Transpose: out = t2.transpose(out); break;
            }
        }
        cur = out;
    }
    return plan;
}

}  // namespace vlx::testing
