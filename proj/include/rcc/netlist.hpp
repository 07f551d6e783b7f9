#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcc/quantize.hpp"

namespace rcc {

enum class NodeKind {
    constant,
    input_port,
    output_port,
    register_node,
    shifter,
    adder,
    subtractor,
    comparator,
    mux
};

inline std::string to_string(NodeKind k) {
    switch (k) {
        case NodeKind::constant: return "constant";
        case NodeKind::input_port: return "input";
        case NodeKind::output_port: return "output";
        case NodeKind::register_node: return "register";
        case NodeKind::shifter: return "shifter";
        case NodeKind::adder: return "adder";
        case NodeKind::subtractor: return "subtractor";
        case NodeKind::comparator: return "comparator";
        case NodeKind::mux: return "mux";
    }
    throw std::logic_error("unreachable");
}

struct Node {
    int id = 0;
    NodeKind kind = NodeKind::constant;
    int width = 1;                // signed bit-width of the node's value
    std::vector<int> operands;   // register: single operand = next-state driver
    std::int64_t constant = 0;   // constant value or comparator threshold
    int shift = 0;               // shifter amount
    std::string name;            // stable port/register name
};

// Single-clock direct-logic IR. `nodes` is topologically ordered over
// combinational edges; registers break cycles.
struct Netlist {
    std::vector<Node> nodes;
    std::vector<int> inputs;
    std::vector<int> outputs;
    std::vector<int> registers;
    int q = 0;
    long n = 0, d_in = 0, d_out = 0;
    std::string module_name = "rc_accel";
};

// Canonical signed digit (non-adjacent form) decomposition: value =
// sum of sign * 2^shift with no two adjacent nonzero digits. Minimal
// nonzero-digit count among signed binary representations.
struct CsdTerm {
    int sign;   // +1 or -1
    int shift;  // power of two
};

inline std::vector<CsdTerm> csd_decompose(std::int64_t value) {
    std::vector<CsdTerm> terms;
    std::int64_t x = value;
    int pos = 0;
    while (x != 0) {
        if (x & 1) {
            const int d = 2 - static_cast<int>(x & 3);  // +1 or -1
            terms.push_back({d, pos});
            x -= d;
        }
        x >>= 1;
        ++pos;
    }
    return terms;
}

inline int signed_width_for(std::int64_t v) {
    int w = 1;
    while (v < -(std::int64_t(1) << (w - 1)) ||
           v > (std::int64_t(1) << (w - 1)) - 1)
        ++w;
    return w;
}

namespace detail {

// Tracks each node's exact value range so declared widths are tight: a
// chain of one-bit comparator outputs sums to a few bits, not one bit per
// addition.
class NetlistBuilder {
public:
    explicit NetlistBuilder(Netlist& net) : net_(net) {
        for (const Node& node : net_.nodes) push_range_for(node);
    }

    int add(NodeKind kind, int width, std::vector<int> operands,
            std::int64_t constant = 0, int shift = 0, std::string name = {}) {
        Node node;
        node.id = static_cast<int>(net_.nodes.size());
        node.kind = kind;
        node.width = width;
        node.operands = std::move(operands);
        node.constant = constant;
        node.shift = shift;
        node.name = std::move(name);
        net_.nodes.push_back(std::move(node));
        push_range_for(net_.nodes.back());
        return net_.nodes.back().id;
    }

    int constant(std::int64_t v) {
        return add(NodeKind::constant, signed_width_for(v), {}, v);
    }

    int width_of(int id) const { return net_.nodes[static_cast<std::size_t>(id)].width; }

    // Shift/add chain for src * weight from the CSD decomposition.
    // Returns -1 for weight 0 (no hardware).
    int constant_multiply(int src, std::int64_t weight) {
        if (weight == 0) return -1;
        int sum = -1;
        for (const CsdTerm& term : csd_decompose(weight)) {
            int t = src;
            if (term.shift > 0)
                t = add_ranged(NodeKind::shifter, {src},
                               lo_[static_cast<std::size_t>(src)] << term.shift,
                               hi_[static_cast<std::size_t>(src)] << term.shift,
                               0, term.shift);
            sum = accumulate(sum, t, term.sign);
        }
        return sum;
    }

    int accumulate(int sum, int term, int sign) {
        const auto t = static_cast<std::size_t>(term);
        if (sum < 0) {
            if (sign > 0) return term;
            const int zero = constant(0);
            return add_ranged(NodeKind::subtractor, {zero, term}, -hi_[t],
                              -lo_[t]);
        }
        const auto s = static_cast<std::size_t>(sum);
        if (sign > 0)
            return add_ranged(NodeKind::adder, {sum, term}, lo_[s] + lo_[t],
                              hi_[s] + hi_[t]);
        return add_ranged(NodeKind::subtractor, {sum, term}, lo_[s] - hi_[t],
                          hi_[s] - lo_[t]);
    }

private:
    int add_ranged(NodeKind kind, std::vector<int> operands, std::int64_t lo,
                   std::int64_t hi, std::int64_t constant = 0, int shift = 0) {
        const int width =
            std::max(signed_width_for(lo), signed_width_for(hi));
        const int id = add(kind, width, std::move(operands), constant, shift);
        lo_[static_cast<std::size_t>(id)] = lo;
        hi_[static_cast<std::size_t>(id)] = hi;
        return id;
    }

    // Range implied by a node added with an explicit width: the full signed
    // span, except where the node kind pins something tighter.
    void push_range_for(const Node& node) {
        std::int64_t lo, hi;
        switch (node.kind) {
            case NodeKind::constant:
                lo = hi = node.constant;
                break;
            case NodeKind::comparator:
                lo = 0;
                hi = 1;
                break;
            default:
                lo = -(std::int64_t(1) << (node.width - 1));
                hi = (std::int64_t(1) << (node.width - 1)) - 1;
                break;
        }
        lo_.resize(net_.nodes.size(), 0);
        hi_.resize(net_.nodes.size(), 0);
        lo_[static_cast<std::size_t>(node.id)] = lo;
        hi_[static_cast<std::size_t>(node.id)] = hi;
    }

    Netlist& net_;
    std::vector<std::int64_t> lo_, hi_;
};

}  // namespace detail

// Lowers a (pruned) quantized model to a fully unrolled combinational
// datapath with one register stage at the state vector. Every surviving
// weight becomes a hardwired CSD shift/add chain; the streamlined activation
// becomes threshold comparators plus code selection; pruned weights
// contribute no hardware.
inline Netlist lower(const QuantizedModel& qm,
                     const std::string& module_name = "rc_accel") {
    const long d_out = qm.w_out_int.rows();
    if (qm.nonzeros.empty() && qm.w_in_int.isZero())
        throw std::runtime_error("lower: degenerate model (no datapath)");

    Netlist net;
    net.q = qm.q;
    net.n = qm.n;
    net.d_in = qm.d_in;
    net.d_out = d_out;
    net.module_name = module_name;
    detail::NetlistBuilder b(net);

    for (long j = 0; j < qm.d_in; ++j)
        net.inputs.push_back(b.add(NodeKind::input_port, qm.q, {}, 0, 0,
                                   "u" + std::to_string(j)));

    // State registers first so neuron logic can reference them; their
    // next-state operand is patched in below.
    for (long i = 0; i < qm.n; ++i)
        net.registers.push_back(b.add(NodeKind::register_node, qm.q, {}, 0, 0,
                                      "s" + std::to_string(i)));

    const auto transitions = qm.table.transitions();
    const std::int64_t code_floor = qm.table.codes.front();

    for (long i = 0; i < qm.n; ++i) {
        int acc = -1;
        if (qm.bias_int.size() > 0 && qm.bias_int(i) != 0)
            acc = b.constant(qm.bias_int(i));
        for (long j = 0; j < qm.d_in; ++j) {
            const int term = b.constant_multiply(
                net.inputs[static_cast<std::size_t>(j)], qm.w_in_int(i, j));
            if (term >= 0) acc = b.accumulate(acc, term, +1);
        }
        for (long c = 0; c < qm.n; ++c) {
            const std::int64_t w = qm.w_r_int(i, c);
            if (w == 0) continue;
            const int term = b.constant_multiply(
                net.registers[static_cast<std::size_t>(c)], w);
            if (term >= 0) acc = b.accumulate(acc, term, +1);
        }
        if (acc < 0) acc = b.constant(0);

        // code = floor code + number of thresholds the accumulator passes.
        int count = -1;
        for (const auto& [threshold, code] : transitions) {
            const int cmp = b.add(NodeKind::comparator, 2, {acc}, threshold);
            count = b.accumulate(count, cmp, +1);
        }
        int next;
        if (count < 0) {
            next = b.constant(code_floor);
        } else if (code_floor == 0) {
            next = count;
        } else {
            next = b.accumulate(b.constant(code_floor), count, +1);
        }
        net.nodes[static_cast<std::size_t>(
                      net.registers[static_cast<std::size_t>(i)])]
            .operands = {next};
    }

    for (long o = 0; o < d_out; ++o) {
        int acc = -1;
        for (long i = 0; i < qm.n; ++i) {
            const int term = b.constant_multiply(
                net.registers[static_cast<std::size_t>(i)], qm.w_out_int(o, i));
            if (term >= 0) acc = b.accumulate(acc, term, +1);
        }
        if (acc < 0) acc = b.constant(0);
        net.outputs.push_back(b.add(NodeKind::output_port, b.width_of(acc),
                                    {acc}, 0, 0, "y" + std::to_string(o)));
    }
    return net;
}

// ---- Structural checks -----------------------------------------------------

// Combinational edges must only point backwards in the node list; registers
// may close cycles through their next-state operand.
inline void check_acyclic(const Netlist& net) {
    for (const Node& node : net.nodes) {
        if (node.kind == NodeKind::register_node) continue;
        for (const int op : node.operands)
            if (op >= node.id)
                throw std::runtime_error(
                    "netlist: combinational edge violates topological order at node " +
                    std::to_string(node.id));
    }
}

// ---- Cost model -------------------------------------------------------------

struct CostEstimate {
    long n_adders = 0;       // adders + subtractors
    long n_comparators = 0;
    long n_registers = 0;
    long n_shift_terms = 0;
    long est_luts = 0;       // documented linear model, relative ordering only
    long critical_path_levels = 0;
};

// est_luts = sum over adders/subtractors of the widest operand
//          + sum over comparators of their operand width.
inline CostEstimate estimate_cost(const Netlist& net) {
    CostEstimate cost;
    std::vector<long> level(net.nodes.size(), 0);
    for (const Node& node : net.nodes) {
        long op_level = 0;
        int op_width = 0;
        for (const int op : node.operands) {
            const auto i = static_cast<std::size_t>(op);
            if (net.nodes[i].kind != NodeKind::register_node)
                op_level = std::max(op_level, level[i]);
            op_width = std::max(op_width, net.nodes[i].width);
        }
        switch (node.kind) {
            case NodeKind::adder:
            case NodeKind::subtractor:
                ++cost.n_adders;
                cost.est_luts += op_width;
                level[static_cast<std::size_t>(node.id)] = op_level + 1;
                break;
            case NodeKind::comparator:
                ++cost.n_comparators;
                cost.est_luts += op_width;
                level[static_cast<std::size_t>(node.id)] = op_level + 1;
                break;
            case NodeKind::mux:
                level[static_cast<std::size_t>(node.id)] = op_level + 1;
                break;
            case NodeKind::shifter:
                ++cost.n_shift_terms;
                level[static_cast<std::size_t>(node.id)] = op_level;  // wiring only
                break;
            case NodeKind::register_node:
                ++cost.n_registers;
                break;
            case NodeKind::constant:
            case NodeKind::input_port:
                break;
            case NodeKind::output_port:
                level[static_cast<std::size_t>(node.id)] = op_level;
                break;
        }
        cost.critical_path_levels = std::max(
            cost.critical_path_levels, level[static_cast<std::size_t>(node.id)]);
    }
    return cost;
}

// ---- Cycle-accurate interpreter ---------------------------------------------

// Evaluates the netlist with two's-complement arithmetic at declared widths.
// Registers update once per input step; outputs are read post-edge so the
// integer output sequence matches quantized_forward of the source model.
class NetlistInterpreter {
public:
    explicit NetlistInterpreter(const Netlist& net) : net_(net) {
        check_acyclic(net_);
        values_.assign(net_.nodes.size(), 0);
        // Output cone: combinational nodes feeding the output ports, which
        // must be re-evaluated after the register edge.
        std::vector<bool> in_cone(net_.nodes.size(), false);
        std::vector<int> stack(net_.outputs.begin(), net_.outputs.end());
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            const auto i = static_cast<std::size_t>(id);
            if (in_cone[i]) continue;
            const NodeKind k = net_.nodes[i].kind;
            if (k == NodeKind::register_node || k == NodeKind::input_port ||
                k == NodeKind::constant)
                continue;
            in_cone[i] = true;
            for (const int op : net_.nodes[i].operands) stack.push_back(op);
        }
        for (std::size_t i = 0; i < in_cone.size(); ++i)
            if (in_cone[i]) out_cone_.push_back(static_cast<int>(i));
        for (const Node& node : net_.nodes)
            if (node.kind == NodeKind::constant)
                values_[static_cast<std::size_t>(node.id)] = node.constant;
    }

    void reset() {
        for (const int r : net_.registers)
            values_[static_cast<std::size_t>(r)] = 0;
    }

    // One clock cycle: applies the input vector, updates state, returns the
    // post-edge outputs.
    std::vector<std::int64_t> step(const std::vector<std::int64_t>& inputs) {
        if (inputs.size() != net_.inputs.size())
            throw std::invalid_argument("interpreter: input arity mismatch");
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            const auto i = static_cast<std::size_t>(net_.inputs[j]);
            check_width(net_.nodes[i], inputs[j]);
            values_[i] = inputs[j];
        }
        for (const Node& node : net_.nodes) eval(node);
        // Register edge.
        std::vector<std::int64_t> next(net_.registers.size());
        for (std::size_t k = 0; k < net_.registers.size(); ++k) {
            const Node& reg =
                net_.nodes[static_cast<std::size_t>(net_.registers[k])];
            const std::int64_t v =
                values_[static_cast<std::size_t>(reg.operands.at(0))];
            check_width(reg, v);
            next[k] = v;
        }
        for (std::size_t k = 0; k < net_.registers.size(); ++k)
            values_[static_cast<std::size_t>(net_.registers[k])] = next[k];
        // Post-edge re-evaluation of the readout cone.
        for (const int id : out_cone_)
            eval(net_.nodes[static_cast<std::size_t>(id)]);
        std::vector<std::int64_t> out(net_.outputs.size());
        for (std::size_t k = 0; k < net_.outputs.size(); ++k)
            out[k] = values_[static_cast<std::size_t>(net_.outputs[k])];
        return out;
    }

private:
    void check_width(const Node& node, std::int64_t v) const {
        if (node.width >= 64) return;  // anything representable fits
        const std::int64_t lim = std::int64_t(1) << (node.width - 1);
        if (v < -lim || v >= lim)
            throw std::runtime_error("interpreter: width violation at node " +
                                     std::to_string(node.id) + " (" +
                                     to_string(node.kind) + ")");
    }

    void eval(const Node& node) {
        const auto op = [&](std::size_t k) {
            return values_[static_cast<std::size_t>(node.operands[k])];
        };
        std::int64_t v;
        switch (node.kind) {
            case NodeKind::constant:
            case NodeKind::input_port:
            case NodeKind::register_node:
                return;  // held values
            case NodeKind::output_port: v = op(0); break;
            case NodeKind::shifter: v = op(0) << node.shift; break;
            case NodeKind::adder: v = op(0) + op(1); break;
            case NodeKind::subtractor: v = op(0) - op(1); break;
            case NodeKind::comparator: v = op(0) >= node.constant ? 1 : 0; break;
            case NodeKind::mux: v = op(0) != 0 ? op(1) : op(2); break;
            default: throw std::logic_error("unreachable");
        }
        check_width(node, v);
        values_[static_cast<std::size_t>(node.id)] = v;
    }

    const Netlist& net_;
    std::vector<std::int64_t> values_;
    std::vector<int> out_cone_;
};

// Runs the netlist over a quantized input sequence from reset.
inline Int64Matrix interpret_netlist(const Netlist& net,
                                     const IntMatrix& inputs_int) {
    NetlistInterpreter interp(net);
    interp.reset();
    Int64Matrix out(inputs_int.rows(), static_cast<long>(net.outputs.size()));
    std::vector<std::int64_t> u(static_cast<std::size_t>(inputs_int.cols()));
    for (long t = 0; t < inputs_int.rows(); ++t) {
        for (long j = 0; j < inputs_int.cols(); ++j)
            u[static_cast<std::size_t>(j)] = inputs_int(t, j);
        const auto y = interp.step(u);
        for (std::size_t k = 0; k < y.size(); ++k)
            out(t, static_cast<long>(k)) = y[k];
    }
    return out;
}

}  // namespace rcc
