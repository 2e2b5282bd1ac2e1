#pragma once

// Physical plans: the operator DAG the compiler emits, the matcher traverses
// and the repository persists. Operator parameters are kept in canonical form
// so that textual equality of parameters is semantic equality.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "restore/record.hpp"

namespace restore {

enum class OpKind {
    Load, Store, Project, Filter, Join, Group, CoGroup,
    Distinct, Union, Split, Aggregate
};

inline const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Load: return "load";
        case OpKind::Store: return "store";
        case OpKind::Project: return "project";
        case OpKind::Filter: return "filter";
        case OpKind::Join: return "join";
        case OpKind::Group: return "group";
        case OpKind::CoGroup: return "cogroup";
        case OpKind::Distinct: return "distinct";
        case OpKind::Union: return "union";
        case OpKind::Split: return "split";
        case OpKind::Aggregate: return "aggregate";
    }
    return "?";
}

inline std::optional<OpKind> op_kind_from_name(std::string_view s) {
    static const std::pair<const char*, OpKind> table[] = {
        {"load", OpKind::Load},       {"store", OpKind::Store},
        {"project", OpKind::Project}, {"filter", OpKind::Filter},
        {"join", OpKind::Join},       {"group", OpKind::Group},
        {"cogroup", OpKind::CoGroup}, {"distinct", OpKind::Distinct},
        {"union", OpKind::Union},     {"split", OpKind::Split},
        {"aggregate", OpKind::Aggregate},
    };
    for (auto& [n, k] : table)
        if (s == n) return k;
    return std::nullopt;
}

inline bool is_shuffle_kind(OpKind k) {
    return k == OpKind::Join || k == OpKind::Group || k == OpKind::CoGroup ||
           k == OpKind::Distinct;
}

// ---------------------------------------------------------------------------
// Schemas

struct Column {
    std::string name;
    bool is_bag = false;
    std::vector<std::string> inner; // inner field names when is_bag
};

using SchemaDef = std::vector<Column>;

inline std::string schema_to_text(const SchemaDef& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out.push_back(',');
        out += s[i].name;
        if (s[i].is_bag) {
            out += "#bag(";
            out += join(s[i].inner, ',');
            out.push_back(')');
        }
    }
    return out;
}

// Split on commas that are not inside parentheses.
inline std::vector<std::string> split_top_level(std::string_view s) {
    std::vector<std::string> parts;
    if (s.empty()) return parts;
    int depth = 0;
    size_t start = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(') ++depth;
        else if (s[i] == ')') --depth;
        else if (s[i] == ',' && depth == 0) {
            parts.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    parts.emplace_back(s.substr(start));
    return parts;
}

inline SchemaDef schema_from_text(std::string_view s) {
    SchemaDef out;
    if (s.empty()) return out;
    for (auto& part : split_top_level(s)) {
        Column c;
        size_t marker = part.find("#bag(");
        if (marker != std::string::npos && part.back() == ')') {
            c.name = part.substr(0, marker);
            c.is_bag = true;
            std::string inners = part.substr(marker + 5, part.size() - marker - 6);
            if (!inners.empty()) c.inner = split(inners, ',');
        } else {
            c.name = part;
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline int schema_index(const SchemaDef& s, const std::string& name) {
    for (size_t i = 0; i < s.size(); ++i)
        if (s[i].name == name) return static_cast<int>(i);
    return -1;
}

// ---------------------------------------------------------------------------
// Predicates

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

inline const char* cmp_op_text(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "==";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

inline CmpOp cmp_op_mirror(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return CmpOp::Gt;
        case CmpOp::Le: return CmpOp::Ge;
        case CmpOp::Gt: return CmpOp::Lt;
        case CmpOp::Ge: return CmpOp::Le;
        default: return op;
    }
}

enum class OperandKind { Column, Number, String };

struct Operand {
    OperandKind kind = OperandKind::Column;
    std::string text; // column name, numeric literal text, or raw string body

    std::string to_text() const {
        if (kind == OperandKind::String) return "'" + text + "'";
        return text;
    }
    bool operator==(const Operand&) const = default;
};

struct Comparison {
    Operand lhs;
    CmpOp op = CmpOp::Eq;
    Operand rhs;

    std::string to_text() const {
        return lhs.to_text() + cmp_op_text(op) + rhs.to_text();
    }
    bool operator==(const Comparison&) const = default;
};

struct Predicate {
    std::vector<Comparison> conjuncts;

    std::string to_text() const {
        std::string out;
        for (size_t i = 0; i < conjuncts.size(); ++i) {
            if (i) out += " and ";
            out += conjuncts[i].to_text();
        }
        return out;
    }
    bool operator==(const Predicate&) const = default;

    std::vector<std::string> columns() const {
        std::vector<std::string> cols;
        for (const auto& c : conjuncts) {
            if (c.lhs.kind == OperandKind::Column) cols.push_back(c.lhs.text);
            if (c.rhs.kind == OperandKind::Column) cols.push_back(c.rhs.text);
        }
        return cols;
    }
};

// Literal-on-the-left comparisons are mirrored, symmetric comparisons order
// their operands textually, and conjuncts are sorted, so Filter(x>3) and
// Filter(3<x) serialize identically.
inline void canonicalize(Predicate& p) {
    for (auto& c : p.conjuncts) {
        bool lhs_lit = c.lhs.kind != OperandKind::Column;
        bool rhs_lit = c.rhs.kind != OperandKind::Column;
        if (lhs_lit && !rhs_lit) {
            std::swap(c.lhs, c.rhs);
            c.op = cmp_op_mirror(c.op);
        } else if ((c.op == CmpOp::Eq || c.op == CmpOp::Ne) &&
                   c.rhs.to_text() < c.lhs.to_text()) {
            std::swap(c.lhs, c.rhs);
        }
    }
    std::sort(p.conjuncts.begin(), p.conjuncts.end(),
              [](const Comparison& a, const Comparison& b) {
                  return a.to_text() < b.to_text();
              });
}

namespace detail {

inline bool looks_numeric(std::string_view s) {
    if (s.empty()) return false;
    size_t i = (s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    bool dot = false;
    for (; i < s.size(); ++i) {
        if (s[i] == '.') {
            if (dot || i + 1 == s.size()) return false;
            dot = true;
        } else if (s[i] < '0' || s[i] > '9') {
            return false;
        }
    }
    return true;
}

} // namespace detail

// Parses the canonical predicate text produced by Predicate::to_text.
inline Predicate predicate_from_text(std::string_view s) {
    Predicate p;
    size_t pos = 0;
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("bad predicate text: " + why);
    };
    while (pos < s.size()) {
        auto parse_operand = [&]() -> Operand {
            Operand o;
            if (s[pos] == '\'') {
                size_t close = s.find('\'', pos + 1);
                if (close == std::string_view::npos) fail("unterminated string");
                o.kind = OperandKind::String;
                o.text = std::string(s.substr(pos + 1, close - pos - 1));
                pos = close + 1;
                return o;
            }
            size_t start = pos;
            while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) ||
                                      s[pos] == '_' || s[pos] == '.' || s[pos] == '-'))
                ++pos;
            if (pos == start) fail("empty operand");
            std::string text(s.substr(start, pos - start));
            o.kind = detail::looks_numeric(text) ? OperandKind::Number : OperandKind::Column;
            o.text = std::move(text);
            return o;
        };
        Comparison c;
        c.lhs = parse_operand();
        static const std::pair<const char*, CmpOp> ops[] = {
            {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}, {"<=", CmpOp::Le},
            {">=", CmpOp::Ge}, {"<", CmpOp::Lt},  {">", CmpOp::Gt},
        };
        bool found = false;
        for (auto& [tok, op] : ops) {
            if (s.substr(pos, std::string_view(tok).size()) == tok) {
                c.op = op;
                pos += std::string_view(tok).size();
                found = true;
                break;
            }
        }
        if (!found) fail("missing comparison operator");
        c.rhs = parse_operand();
        p.conjuncts.push_back(std::move(c));
        if (pos < s.size()) {
            if (s.substr(pos, 5) != " and ") fail("expected ' and '");
            pos += 5;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Aggregates

enum class AggFn { Sum, Count, Avg, Min, Max };

inline const char* agg_fn_name(AggFn f) {
    switch (f) {
        case AggFn::Sum: return "sum";
        case AggFn::Count: return "count";
        case AggFn::Avg: return "avg";
        case AggFn::Min: return "min";
        case AggFn::Max: return "max";
    }
    return "?";
}

inline std::optional<AggFn> agg_fn_from_name(std::string_view s) {
    static const std::pair<const char*, AggFn> table[] = {
        {"sum", AggFn::Sum}, {"count", AggFn::Count}, {"avg", AggFn::Avg},
        {"min", AggFn::Min}, {"max", AggFn::Max},
    };
    for (auto& [n, f] : table)
        if (s == n) return f;
    return std::nullopt;
}

// One generate item of an aggregating foreach: either a reference to the
// group key column or an aggregate over a bag column. COUNT counts tuples,
// so it carries no inner column.
struct AggItem {
    bool is_key = false;
    AggFn fn = AggFn::Count;
    std::string bag_col;   // name of the bag column ("bag", "bag0", ...)
    std::string inner_col; // field inside the bag; empty for count

    std::string to_text() const {
        if (is_key) return "group";
        std::string out = agg_fn_name(fn);
        out.push_back('(');
        out += bag_col;
        if (!inner_col.empty()) {
            out.push_back('.');
            out += inner_col;
        }
        out.push_back(')');
        return out;
    }
    bool operator==(const AggItem&) const = default;
};

inline AggItem agg_item_from_text(std::string_view s) {
    AggItem item;
    if (s == "group") {
        item.is_key = true;
        return item;
    }
    size_t open = s.find('(');
    if (open == std::string_view::npos || s.back() != ')')
        throw std::runtime_error("bad aggregate item: " + std::string(s));
    auto fn = agg_fn_from_name(s.substr(0, open));
    if (!fn) throw std::runtime_error("bad aggregate item: " + std::string(s));
    item.fn = *fn;
    std::string_view arg = s.substr(open + 1, s.size() - open - 2);
    size_t dot = arg.find('.');
    if (dot == std::string_view::npos) {
        item.bag_col = std::string(arg);
    } else {
        item.bag_col = std::string(arg.substr(0, dot));
        item.inner_col = std::string(arg.substr(dot + 1));
    }
    return item;
}

// ---------------------------------------------------------------------------
// Operators and plans

struct OpParams {
    std::string path;                           // load, store
    SchemaDef schema;                           // load
    std::vector<std::string> columns;           // project
    Predicate predicate;                        // filter
    std::vector<std::vector<std::string>> keys; // join/group/cogroup, per slot
    std::vector<AggItem> aggs;                  // aggregate
};

inline std::string params_to_text(OpKind kind, const OpParams& p) {
    switch (kind) {
        case OpKind::Load:
            return "path='" + p.path + "' schema=" + schema_to_text(p.schema);
        case OpKind::Store:
            return "path='" + p.path + "'";
        case OpKind::Project:
            return "cols=" + join(p.columns, ',');
        case OpKind::Filter:
            return "pred=" + p.predicate.to_text();
        case OpKind::Join:
        case OpKind::Group:
        case OpKind::CoGroup: {
            std::string out = "keys=";
            for (size_t i = 0; i < p.keys.size(); ++i) {
                if (i) out.push_back('|');
                out += join(p.keys[i], ',');
            }
            return out;
        }
        case OpKind::Aggregate: {
            std::string out = "items=";
            for (size_t i = 0; i < p.aggs.size(); ++i) {
                if (i) out.push_back(',');
                out += p.aggs[i].to_text();
            }
            return out;
        }
        default:
            return "";
    }
}

inline OpParams params_from_text(OpKind kind, std::string_view s) {
    OpParams p;
    auto expect_prefix = [&](std::string_view prefix) -> std::string_view {
        if (s.substr(0, prefix.size()) != prefix)
            throw std::runtime_error("bad op params: " + std::string(s));
        return s.substr(prefix.size());
    };
    switch (kind) {
        case OpKind::Load: {
            auto rest = expect_prefix("path='");
            size_t close = rest.find('\'');
            if (close == std::string_view::npos)
                throw std::runtime_error("bad load params");
            p.path = std::string(rest.substr(0, close));
            rest = rest.substr(close + 1);
            if (rest.substr(0, 8) != " schema=")
                throw std::runtime_error("bad load params");
            p.schema = schema_from_text(rest.substr(8));
            break;
        }
        case OpKind::Store: {
            auto rest = expect_prefix("path='");
            size_t close = rest.rfind('\'');
            if (close == std::string_view::npos)
                throw std::runtime_error("bad store params");
            p.path = std::string(rest.substr(0, close));
            break;
        }
        case OpKind::Project: {
            auto rest = expect_prefix("cols=");
            if (!rest.empty()) p.columns = split(rest, ',');
            break;
        }
        case OpKind::Filter:
            p.predicate = predicate_from_text(expect_prefix("pred="));
            break;
        case OpKind::Join:
        case OpKind::Group:
        case OpKind::CoGroup: {
            auto rest = expect_prefix("keys=");
            for (auto& slot : split(rest, '|'))
                p.keys.push_back(slot.empty() ? std::vector<std::string>{}
                                              : split(slot, ','));
            break;
        }
        case OpKind::Aggregate: {
            auto rest = expect_prefix("items=");
            for (auto& item : split_top_level(rest))
                p.aggs.push_back(agg_item_from_text(item));
            break;
        }
        default:
            if (!s.empty()) throw std::runtime_error("unexpected op params");
            break;
    }
    return p;
}

struct PhysicalOperator {
    int id = -1;
    OpKind kind = OpKind::Load;
    OpParams params;

    std::string signature() const {
        std::string out = op_kind_name(kind);
        std::string params_text = params_to_text(kind, params);
        if (!params_text.empty()) {
            out.push_back(' ');
            out += params_text;
        }
        return out;
    }
};

struct PlanEdge {
    int src = -1;
    int dst = -1;
    int slot = 0;
};

struct PhysicalPlan {
    std::vector<PhysicalOperator> ops;
    std::vector<PlanEdge> edges;

    int add(OpKind kind, OpParams params = {}) {
        int id = 0;
        for (const auto& op : ops) id = std::max(id, op.id + 1);
        ops.push_back({id, kind, std::move(params)});
        return id;
    }

    void add_edge(int src, int dst, int slot) { edges.push_back({src, dst, slot}); }

    const PhysicalOperator* find(int id) const {
        for (const auto& op : ops)
            if (op.id == id) return &op;
        return nullptr;
    }
    PhysicalOperator* find(int id) {
        for (auto& op : ops)
            if (op.id == id) return &op;
        return nullptr;
    }

    // Producer ids ordered by input slot.
    std::vector<int> inputs(int id) const {
        std::vector<std::pair<int, int>> slots;
        for (const auto& e : edges)
            if (e.dst == id) slots.emplace_back(e.slot, e.src);
        std::sort(slots.begin(), slots.end());
        std::vector<int> out;
        for (auto& [slot, src] : slots) out.push_back(src);
        return out;
    }

    std::vector<int> consumers(int id) const {
        std::vector<int> out;
        for (const auto& e : edges)
            if (e.src == id) out.push_back(e.dst);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    std::vector<int> ids_of(OpKind kind) const {
        std::vector<int> out;
        for (const auto& op : ops)
            if (op.kind == kind) out.push_back(op.id);
        std::sort(out.begin(), out.end());
        return out;
    }

    // Deterministic topological order; ties broken by op id.
    std::vector<int> topo_order() const {
        std::map<int, int> indegree;
        for (const auto& op : ops) indegree[op.id] = 0;
        for (const auto& e : edges) ++indegree[e.dst];
        std::set<int> ready;
        for (auto& [id, deg] : indegree)
            if (deg == 0) ready.insert(id);
        std::vector<int> order;
        while (!ready.empty()) {
            int id = *ready.begin();
            ready.erase(ready.begin());
            order.push_back(id);
            for (const auto& e : edges)
                if (e.src == id && --indegree[e.dst] == 0) ready.insert(e.dst);
        }
        return order;
    }

    // Ancestors of `id` (inclusive).
    std::set<int> ancestors(int id) const {
        std::set<int> seen;
        std::vector<int> stack{id};
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            if (!seen.insert(cur).second) continue;
            for (const auto& e : edges)
                if (e.dst == cur) stack.push_back(e.src);
        }
        return seen;
    }

    // Structural validation; returns an empty string when the plan is well
    // formed, otherwise a description of the first problem found.
    std::string check() const {
        std::set<int> ids;
        for (const auto& op : ops)
            if (!ids.insert(op.id).second)
                return "duplicate op id " + std::to_string(op.id);
        for (const auto& e : edges) {
            if (!ids.count(e.src)) return "edge from unknown op " + std::to_string(e.src);
            if (!ids.count(e.dst)) return "edge to unknown op " + std::to_string(e.dst);
        }
        if (topo_order().size() != ops.size()) return "plan contains a cycle";
        for (const auto& op : ops) {
            size_t arity = inputs(op.id).size();
            size_t fanout = consumers(op.id).size();
            std::set<int> slots;
            for (const auto& e : edges)
                if (e.dst == op.id && !slots.insert(e.slot).second)
                    return "duplicate input slot on op " + std::to_string(op.id);
            for (size_t i = 0; i < arity; ++i)
                if (!slots.count(static_cast<int>(i)))
                    return "non-dense input slots on op " + std::to_string(op.id);
            auto need = [&](bool cond, const char* what) -> std::string {
                if (cond) return "";
                return std::string(op_kind_name(op.kind)) + " op " +
                       std::to_string(op.id) + ": " + what;
            };
            std::string err;
            switch (op.kind) {
                case OpKind::Load: err = need(arity == 0, "expects no inputs"); break;
                case OpKind::Store:
                    err = need(arity == 1, "expects one input");
                    if (err.empty()) err = need(fanout == 0, "must be terminal");
                    break;
                case OpKind::Project:
                case OpKind::Filter:
                case OpKind::Distinct:
                case OpKind::Split:
                case OpKind::Group:
                case OpKind::Aggregate:
                    err = need(arity == 1, "expects one input");
                    break;
                case OpKind::Join:
                case OpKind::CoGroup:
                case OpKind::Union:
                    err = need(arity >= 2, "expects at least two inputs");
                    break;
            }
            if (!err.empty()) return err;
            if ((op.kind == OpKind::Join || op.kind == OpKind::CoGroup) &&
                op.params.keys.size() != arity)
                return "key list count mismatch on op " + std::to_string(op.id);
        }
        return "";
    }
};

// ---------------------------------------------------------------------------
// Schema inference

struct SchemaResult {
    std::map<int, SchemaDef> by_op;
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

namespace detail {

inline void unique_names(SchemaDef& s) {
    std::set<std::string> seen;
    for (auto& c : s) {
        if (seen.insert(c.name).second) continue;
        int n = 2;
        while (!seen.insert(c.name + "_" + std::to_string(n)).second) ++n;
        c.name += "_" + std::to_string(n);
    }
}

} // namespace detail

inline SchemaDef join_output_schema(const std::vector<SchemaDef>& ins) {
    std::map<std::string, int> name_count;
    for (const auto& in : ins)
        for (const auto& c : in) ++name_count[c.name];
    SchemaDef out;
    for (size_t slot = 0; slot < ins.size(); ++slot) {
        for (const auto& c : ins[slot]) {
            Column col = c;
            if (name_count[c.name] > 1)
                col.name = "in" + std::to_string(slot) + "." + c.name;
            out.push_back(std::move(col));
        }
    }
    detail::unique_names(out);
    return out;
}

inline std::vector<std::string> column_names(const SchemaDef& s) {
    std::vector<std::string> names;
    for (const auto& c : s) names.push_back(c.name);
    return names;
}

inline SchemaDef group_output_schema(const SchemaDef& in) {
    SchemaDef out;
    out.push_back({"group", false, {}});
    out.push_back({"bag", true, column_names(in)});
    return out;
}

inline SchemaDef cogroup_output_schema(const std::vector<SchemaDef>& ins) {
    SchemaDef out;
    out.push_back({"group", false, {}});
    for (size_t i = 0; i < ins.size(); ++i)
        out.push_back({"bag" + std::to_string(i), true, column_names(ins[i])});
    return out;
}

inline SchemaResult infer_schemas(const PhysicalPlan& plan) {
    SchemaResult res;
    auto err = [&](const PhysicalOperator& op, const std::string& msg) {
        res.errors.push_back(std::string(op_kind_name(op.kind)) + " op " +
                             std::to_string(op.id) + ": " + msg);
    };
    for (int id : plan.topo_order()) {
        const PhysicalOperator& op = *plan.find(id);
        std::vector<SchemaDef> ins;
        bool inputs_ok = true;
        for (int src : plan.inputs(id)) {
            auto it = res.by_op.find(src);
            if (it == res.by_op.end()) {
                inputs_ok = false;
                break;
            }
            ins.push_back(it->second);
        }
        if (!inputs_ok) continue; // upstream already failed
        auto flat = [](const SchemaDef& s) {
            return std::none_of(s.begin(), s.end(),
                                [](const Column& c) { return c.is_bag; });
        };
        auto check_keys = [&](const SchemaDef& in, const std::vector<std::string>& keys,
                              size_t slot) {
            for (const auto& k : keys) {
                int idx = schema_index(in, k);
                if (idx < 0) {
                    err(op, "unknown key column '" + k + "' on input " +
                            std::to_string(slot));
                    return false;
                }
                if (in[static_cast<size_t>(idx)].is_bag) {
                    err(op, "key column '" + k + "' is a bag");
                    return false;
                }
            }
            return true;
        };
        SchemaDef out;
        bool ok = true;
        switch (op.kind) {
            case OpKind::Load:
                out = op.params.schema;
                break;
            case OpKind::Store:
            case OpKind::Split:
                out = ins[0];
                break;
            case OpKind::Project: {
                for (const auto& c : op.params.columns) {
                    int idx = schema_index(ins[0], c);
                    if (idx < 0) {
                        err(op, "unknown column '" + c + "'");
                        ok = false;
                        break;
                    }
                    out.push_back(ins[0][static_cast<size_t>(idx)]);
                }
                if (ok) detail::unique_names(out);
                break;
            }
            case OpKind::Filter: {
                for (const auto& c : op.params.predicate.columns()) {
                    int idx = schema_index(ins[0], c);
                    if (idx < 0) {
                        err(op, "unknown column '" + c + "'");
                        ok = false;
                    } else if (ins[0][static_cast<size_t>(idx)].is_bag) {
                        err(op, "predicate column '" + c + "' is a bag");
                        ok = false;
                    }
                }
                out = ins[0];
                break;
            }
            case OpKind::Join: {
                size_t nkeys = op.params.keys.empty() ? 0 : op.params.keys[0].size();
                for (size_t i = 0; i < ins.size() && ok; ++i) {
                    if (!flat(ins[i])) {
                        err(op, "input " + std::to_string(i) + " is not flat");
                        ok = false;
                        break;
                    }
                    if (op.params.keys[i].size() != nkeys || nkeys == 0) {
                        err(op, "key count mismatch across inputs");
                        ok = false;
                        break;
                    }
                    ok = check_keys(ins[i], op.params.keys[i], i);
                }
                if (ok) out = join_output_schema(ins);
                break;
            }
            case OpKind::Group: {
                if (!flat(ins[0])) {
                    err(op, "input is not flat");
                    ok = false;
                } else if (op.params.keys.size() != 1 || op.params.keys[0].empty()) {
                    err(op, "group needs at least one key");
                    ok = false;
                } else {
                    ok = check_keys(ins[0], op.params.keys[0], 0);
                }
                if (ok) out = group_output_schema(ins[0]);
                break;
            }
            case OpKind::CoGroup: {
                size_t nkeys = op.params.keys.empty() ? 0 : op.params.keys[0].size();
                for (size_t i = 0; i < ins.size() && ok; ++i) {
                    if (!flat(ins[i])) {
                        err(op, "input " + std::to_string(i) + " is not flat");
                        ok = false;
                        break;
                    }
                    if (op.params.keys[i].size() != nkeys || nkeys == 0) {
                        err(op, "key count mismatch across inputs");
                        ok = false;
                        break;
                    }
                    ok = check_keys(ins[i], op.params.keys[i], i);
                }
                if (ok) out = cogroup_output_schema(ins);
                break;
            }
            case OpKind::Distinct:
                out = ins[0];
                break;
            case OpKind::Union: {
                for (size_t i = 1; i < ins.size(); ++i) {
                    if (ins[i].size() != ins[0].size()) {
                        err(op, "input widths differ");
                        ok = false;
                        break;
                    }
                    for (size_t c = 0; c < ins[0].size(); ++c) {
                        if (ins[i][c].is_bag != ins[0][c].is_bag) {
                            err(op, "bag layout differs at column " + std::to_string(c));
                            ok = false;
                            break;
                        }
                    }
                    if (!ok) break;
                }
                out = ins[0];
                break;
            }
            case OpKind::Aggregate: {
                for (const auto& item : op.params.aggs) {
                    if (item.is_key) {
                        int idx = schema_index(ins[0], "group");
                        if (idx < 0 || ins[0][static_cast<size_t>(idx)].is_bag) {
                            err(op, "input has no scalar 'group' column");
                            ok = false;
                            break;
                        }
                        out.push_back({"group", false, {}});
                        continue;
                    }
                    int idx = schema_index(ins[0], item.bag_col);
                    if (idx < 0 || !ins[0][static_cast<size_t>(idx)].is_bag) {
                        err(op, "'" + item.bag_col + "' is not a bag column");
                        ok = false;
                        break;
                    }
                    const Column& bag = ins[0][static_cast<size_t>(idx)];
                    if (!item.inner_col.empty() &&
                        std::find(bag.inner.begin(), bag.inner.end(), item.inner_col) ==
                            bag.inner.end()) {
                        err(op, "bag '" + item.bag_col + "' has no field '" +
                                item.inner_col + "'");
                        ok = false;
                        break;
                    }
                    if (item.fn != AggFn::Count && item.inner_col.empty()) {
                        err(op, std::string(agg_fn_name(item.fn)) +
                                " needs a field inside the bag");
                        ok = false;
                        break;
                    }
                    std::string name = agg_fn_name(item.fn);
                    if (!item.inner_col.empty()) name += "_" + item.inner_col;
                    out.push_back({std::move(name), false, {}});
                }
                if (ok) detail::unique_names(out);
                break;
            }
        }
        if (ok) res.by_op[id] = std::move(out);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Canonical plan text

namespace detail {

// Structural hash used only to pick a deterministic topological numbering, so
// that isomorphic plans serialize identically regardless of construction
// order.
inline std::map<int, uint64_t> structural_hashes(const PhysicalPlan& plan) {
    std::map<int, uint64_t> h;
    for (int id : plan.topo_order()) {
        const auto* op = plan.find(id);
        std::string material = op->signature();
        for (int src : plan.inputs(id)) {
            material.push_back('|');
            material += std::to_string(h[src]);
        }
        h[id] = fnv1a(material);
    }
    return h;
}

} // namespace detail

// Topological numbering with (structural hash, signature) tie-breaks.
inline std::map<int, int> canonical_numbering(const PhysicalPlan& plan) {
    auto hashes = detail::structural_hashes(plan);
    std::map<int, int> remaining;
    for (const auto& op : plan.ops) remaining[op.id] = 0;
    for (const auto& e : plan.edges) ++remaining[e.dst];
    auto rank = [&](int id) {
        return std::make_tuple(hashes[id], plan.find(id)->signature(), id);
    };
    std::vector<int> ready;
    for (auto& [id, deg] : remaining)
        if (deg == 0) ready.push_back(id);
    std::map<int, int> numbering;
    int next = 0;
    while (!ready.empty()) {
        auto best = std::min_element(ready.begin(), ready.end(),
                                     [&](int a, int b) { return rank(a) < rank(b); });
        int id = *best;
        ready.erase(best);
        numbering[id] = next++;
        for (const auto& e : plan.edges)
            if (e.src == id && --remaining[e.dst] == 0) ready.push_back(e.dst);
    }
    return numbering;
}

// Same plan with ids rewritten to their canonical numbers.
inline PhysicalPlan renumber_canonical(const PhysicalPlan& plan) {
    auto numbering = canonical_numbering(plan);
    PhysicalPlan out;
    out.ops = plan.ops;
    out.edges = plan.edges;
    for (auto& op : out.ops) op.id = numbering[op.id];
    for (auto& e : out.edges) {
        e.src = numbering[e.src];
        e.dst = numbering[e.dst];
    }
    std::sort(out.ops.begin(), out.ops.end(),
              [](const PhysicalOperator& a, const PhysicalOperator& b) {
                  return a.id < b.id;
              });
    return out;
}

inline std::string plan_to_text(const PhysicalPlan& plan) {
    auto numbering = canonical_numbering(plan);
    std::vector<const PhysicalOperator*> ordered(plan.ops.size());
    for (const auto& op : plan.ops)
        ordered[static_cast<size_t>(numbering[op.id])] = &op;
    std::string out;
    for (const auto* op : ordered) {
        out += "op " + std::to_string(numbering[op->id]) + " " + op->signature() + "\n";
    }
    std::vector<std::tuple<int, int, int>> edges;
    for (const auto& e : plan.edges)
        edges.emplace_back(numbering[e.dst], e.slot, numbering[e.src]);
    std::sort(edges.begin(), edges.end());
    for (auto& [dst, slot, src] : edges)
        out += "edge " + std::to_string(src) + " " + std::to_string(dst) + " " +
               std::to_string(slot) + "\n";
    return out;
}

inline PhysicalPlan plan_from_text(const std::string& text) {
    PhysicalPlan plan;
    for (auto& line : split(text, '\n')) {
        if (line.empty()) continue;
        if (line.rfind("op ", 0) == 0) {
            std::string rest = line.substr(3);
            size_t sp1 = rest.find(' ');
            if (sp1 == std::string::npos) throw std::runtime_error("bad op line: " + line);
            int id = std::stoi(rest.substr(0, sp1));
            size_t sp2 = rest.find(' ', sp1 + 1);
            std::string kind_name = rest.substr(sp1 + 1, sp2 == std::string::npos
                                                             ? std::string::npos
                                                             : sp2 - sp1 - 1);
            auto kind = op_kind_from_name(kind_name);
            if (!kind) throw std::runtime_error("unknown op kind: " + kind_name);
            std::string params_text =
                sp2 == std::string::npos ? "" : rest.substr(sp2 + 1);
            plan.ops.push_back({id, *kind, params_from_text(*kind, params_text)});
        } else if (line.rfind("edge ", 0) == 0) {
            auto parts = split(line.substr(5), ' ');
            if (parts.size() != 3) throw std::runtime_error("bad edge line: " + line);
            plan.add_edge(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]));
        } else {
            throw std::runtime_error("bad plan line: " + line);
        }
    }
    std::string problem = plan.check();
    if (!problem.empty()) throw std::runtime_error("invalid plan text: " + problem);
    return plan;
}

} // namespace restore
