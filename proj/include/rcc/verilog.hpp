#pragma once

#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcc/netlist.hpp"

namespace rcc {

namespace detail {

inline std::string vlit(std::int64_t v, int width) {
    if (v < 0)
        return "-" + std::to_string(width) + "'sd" + std::to_string(-v);
    return std::to_string(width) + "'sd" + std::to_string(v);
}

inline std::string node_name(const Node& node) {
    if (!node.name.empty()) return node.name;
    return "n" + std::to_string(node.id);
}

}  // namespace detail

// Deterministic synthesizable Verilog-2001 in a small subset: wire/reg
// declarations, continuous assigns over +, -, <<<, >= and literals, and
// posedge-clocked always blocks with synchronous reset. State registers
// load on in_valid; out_valid is in_valid delayed one cycle.
inline std::string emit_verilog(const Netlist& net,
                                const std::string& module_name = "") {
    const std::string name =
        module_name.empty() ? net.module_name : module_name;
    check_acyclic(net);

    std::set<std::string> seen;
    for (const Node& node : net.nodes)
        if (!seen.insert(detail::node_name(node)).second)
            throw std::runtime_error("emit_verilog: identifier collision: " +
                                     detail::node_name(node));

    std::ostringstream out;
    out << "module " << name << " (\n";
    out << "    input wire clk,\n";
    out << "    input wire rst,\n";
    out << "    input wire in_valid,\n";
    for (const int id : net.inputs) {
        const Node& node = net.nodes[static_cast<std::size_t>(id)];
        out << "    input wire signed [" << node.width - 1 << ":0] "
            << detail::node_name(node) << ",\n";
    }
    out << "    output wire out_valid";
    for (const int id : net.outputs) {
        const Node& node = net.nodes[static_cast<std::size_t>(id)];
        out << ",\n    output wire signed [" << node.width - 1 << ":0] "
            << detail::node_name(node);
    }
    out << "\n);\n\n";

    auto ref = [&](int id) {
        return detail::node_name(net.nodes[static_cast<std::size_t>(id)]);
    };

    for (const Node& node : net.nodes) {
        const std::string nm = detail::node_name(node);
        switch (node.kind) {
            case NodeKind::input_port:
            case NodeKind::output_port:
                break;  // declared in the port list
            case NodeKind::register_node:
                out << "    reg signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                break;
            case NodeKind::constant:
                out << "    wire signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                out << "    assign " << nm << " = "
                    << detail::vlit(node.constant, node.width) << ";\n";
                break;
            case NodeKind::shifter:
                out << "    wire signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                out << "    assign " << nm << " = " << ref(node.operands[0])
                    << " <<< " << node.shift << ";\n";
                break;
            case NodeKind::adder:
            case NodeKind::subtractor:
                out << "    wire signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                out << "    assign " << nm << " = " << ref(node.operands[0])
                    << (node.kind == NodeKind::adder ? " + " : " - ")
                    << ref(node.operands[1]) << ";\n";
                break;
            case NodeKind::comparator: {
                const int opw = net.nodes[static_cast<std::size_t>(
                                              node.operands[0])]
                                    .width;
                out << "    wire signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                out << "    assign " << nm << " = " << ref(node.operands[0])
                    << " >= " << detail::vlit(node.constant, opw) << ";\n";
                break;
            }
            case NodeKind::mux:
                out << "    wire signed [" << node.width - 1 << ":0] " << nm
                    << ";\n";
                out << "    assign " << nm << " = " << ref(node.operands[0])
                    << " ? " << ref(node.operands[1]) << " : "
                    << ref(node.operands[2]) << ";\n";
                break;
        }
    }

    out << "\n    reg out_valid_r;\n";
    out << "    always @(posedge clk) begin\n";
    out << "        if (rst) begin\n";
    out << "            out_valid_r <= 1'b0;\n";
    out << "        end else begin\n";
    out << "            out_valid_r <= in_valid;\n";
    out << "        end\n";
    out << "    end\n";
    out << "    assign out_valid = out_valid_r;\n\n";

    for (const int id : net.registers) {
        const Node& reg = net.nodes[static_cast<std::size_t>(id)];
        const std::string nm = detail::node_name(reg);
        out << "    always @(posedge clk) begin\n";
        out << "        if (rst) begin\n";
        out << "            " << nm << " <= " << detail::vlit(0, reg.width)
            << ";\n";
        out << "        end else if (in_valid) begin\n";
        out << "            " << nm << " <= " << ref(reg.operands.at(0))
            << ";\n";
        out << "        end\n";
        out << "    end\n";
    }

    for (const int id : net.outputs) {
        const Node& node = net.nodes[static_cast<std::size_t>(id)];
        out << "    assign " << detail::node_name(node) << " = "
            << ref(node.operands.at(0)) << ";\n";
    }
    out << "endmodule\n";
    return out.str();
}

// Structural checker for the emitted subset. Verifies the module skeleton,
// that every statement matches an allowed form, that referenced identifiers
// are declared, and that every wire is assigned exactly once.
inline void check_verilog_subset(const std::string& text) {
    static const std::regex re_module(R"(^module\s+\w+\s+\($)");
    static const std::regex re_port(
        R"(^\s*(input|output)\s+wire(\s+signed\s+\[\d+:0\])?\s+(\w+),?$)");
    static const std::regex re_endports(R"(^\);$)");
    static const std::regex re_wire(R"(^\s*wire\s+signed\s+\[\d+:0\]\s+(\w+);$)");
    static const std::regex re_reg(R"(^\s*reg(\s+signed\s+\[\d+:0\])?\s+(\w+);$)");
    static const std::regex re_assign(
        R"(^\s*assign\s+(\w+)\s*=\s*(-?\d+'s?d\d+|1'b[01]|\w+)(\s*(\+|-|<<<|>=)\s*(-?\d+'s?d\d+|\d+|\w+))?;$)");
    static const std::regex re_always(R"(^\s*always\s+@\(posedge\s+clk\)\s+begin$)");
    static const std::regex re_if(R"(^\s*if\s+\(rst\)\s+begin$)");
    static const std::regex re_else(R"(^\s*end\s+else(\s+if\s+\(in_valid\))?\s+begin$)");
    static const std::regex re_nba(R"(^\s*(\w+)\s*<=\s*(-?\d+'s?d\d+|1'b[01]|\w+);$)");
    static const std::regex re_end(R"(^\s*end$)");
    static const std::regex re_endmodule(R"(^endmodule$)");
    static const std::regex re_ident(R"([A-Za-z_]\w*)");

    std::set<std::string> declared{"clk", "rst", "in_valid"};
    std::set<std::string> assigned;
    bool in_ports = false, saw_module = false, saw_endmodule = false;
    int always_depth = 0;

    auto check_rhs_idents = [&](const std::string& rhs) {
        for (auto it = std::sregex_iterator(rhs.begin(), rhs.end(), re_ident);
             it != std::sregex_iterator(); ++it) {
            const std::string id = it->str();
            if (id.find("sd") != std::string::npos || id == "b0" || id == "b1")
                continue;  // inside a literal
            if (!declared.count(id))
                throw std::runtime_error("verilog check: undeclared identifier '" +
                                         id + "' in: " + rhs);
        }
    };

    std::istringstream ss(text);
    std::string line;
    long line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::smatch m;
        const auto fail = [&] {
            throw std::runtime_error("verilog check: line " +
                                     std::to_string(line_no) +
                                     " outside subset: " + line);
        };
        if (!saw_module) {
            if (!std::regex_match(line, re_module)) fail();
            saw_module = true;
            in_ports = true;
        } else if (in_ports) {
            if (std::regex_match(line, m, re_port)) {
                declared.insert(m[3].str());
            } else if (std::regex_match(line, re_endports)) {
                in_ports = false;
            } else {
                fail();
            }
        } else if (always_depth > 0) {
            if (std::regex_match(line, re_if)) {
                ++always_depth;
            } else if (std::regex_match(line, re_else)) {
                // closes the if-begin and opens the else-begin: net zero
            } else if (std::regex_match(line, m, re_nba)) {
                if (!declared.count(m[1].str()))
                    throw std::runtime_error(
                        "verilog check: assignment to undeclared '" +
                        m[1].str() + "'");
                check_rhs_idents(m[2].str());
            } else if (std::regex_match(line, re_end)) {
                --always_depth;
            } else {
                fail();
            }
        } else if (std::regex_match(line, m, re_wire)) {
            if (!declared.insert(m[1].str()).second)
                throw std::runtime_error("verilog check: duplicate declaration '" +
                                         m[1].str() + "'");
        } else if (std::regex_match(line, m, re_reg)) {
            if (!declared.insert(m[2].str()).second)
                throw std::runtime_error("verilog check: duplicate declaration '" +
                                         m[2].str() + "'");
        } else if (std::regex_match(line, m, re_assign)) {
            const std::string lhs = m[1].str();
            if (!declared.count(lhs))
                throw std::runtime_error("verilog check: assign to undeclared '" +
                                         lhs + "'");
            if (!assigned.insert(lhs).second)
                throw std::runtime_error("verilog check: multiple drivers for '" +
                                         lhs + "'");
            check_rhs_idents(line.substr(line.find('=') + 1));
        } else if (std::regex_match(line, re_always)) {
            always_depth = 1;
        } else if (std::regex_match(line, re_endmodule)) {
            saw_endmodule = true;
        } else {
            fail();
        }
    }
    if (!saw_module || !saw_endmodule || in_ports || always_depth != 0)
        throw std::runtime_error("verilog check: truncated module");
}

}  // namespace rcc
