#pragma once

// Script front end: tokenizer, parser and schema validator for the Pig-Latin
// subset. Parsing resolves aliases into a statement DAG; validation computes
// output schemas, resolves positional and suffix-qualified column references
// to canonical names, and type-checks operator inputs.

#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "restore/plan.hpp"

namespace restore {

struct ParseError : std::runtime_error {
    int line, col;
    ParseError(int line_, int col_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + " col " +
                             std::to_string(col_) + ": " + msg),
          line(line_), col(col_) {}
};

enum class StmtKind { Load, Foreach, Filter, Join, Group, CoGroup, Distinct, Union, Store };

struct ColRef {
    bool positional = false;
    int pos = -1;
    std::string qualifier; // alias before '.' in aggregate arguments
    std::string name;
    int line = 0, col = 0;
};

struct GenItem {
    enum class Type { Col, GroupKey, Agg };
    Type type = Type::Col;
    ColRef col;           // Col
    AggFn fn = AggFn::Count;
    ColRef arg;           // Agg argument
    bool count_star = false;
    int at_line = 0, at_col = 0;
};

struct Statement {
    int id = -1;
    StmtKind kind = StmtKind::Load;
    std::string alias; // empty for store
    int line = 0, col = 0;

    std::string dataset;                 // load, store
    SchemaDef load_schema;               // load 'as'/'using'
    std::vector<GenItem> items;          // foreach
    Predicate pred;                      // filter, columns as written
    std::vector<std::vector<ColRef>> keys;
    std::vector<int> inputs;             // statement ids
    std::vector<std::string> input_aliases;

    // filled in by validate()
    SchemaDef out_schema;
    bool is_aggregate = false;
    std::vector<std::string> proj_cols;
    std::vector<AggItem> agg_items;
    Predicate resolved_pred;
    std::vector<std::vector<std::string>> resolved_keys;
};

struct LogicalPlan {
    std::vector<Statement> stmts;
    std::map<std::string, int> alias_def;
};

struct Diagnostic {
    int stmt_id = -1;
    std::string alias;
    int line = 0, col = 0;
    std::string message;

    std::string to_text() const {
        std::string where = alias.empty() ? ("statement " + std::to_string(stmt_id + 1))
                                          : ("'" + alias + "'");
        return "line " + std::to_string(line) + " col " + std::to_string(col) + " (" +
               where + "): " + message;
    }
};

// ---------------------------------------------------------------------------
// Tokenizer

namespace detail {

enum class TokType { Ident, Number, String, Punct, Cmp, End };

struct Token {
    TokType type = TokType::End;
    std::string text;
    int line = 1, col = 1;
};

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        skip_space();
        tok_ = Token{TokType::End, "", line_, col_};
        if (pos_ >= src_.size()) return;
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                take();
            tok_.type = TokType::Ident;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            size_t start = pos_;
            if (c == '-') take();
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                take();
            if (pos_ + 1 < src_.size() && src_[pos_] == '.' &&
                std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
                take();
                while (pos_ < src_.size() &&
                       std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    take();
            }
            tok_.type = TokType::Number;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (c == '\'') {
            take();
            size_t start = pos_;
            while (pos_ < src_.size() && src_[pos_] != '\'' && src_[pos_] != '\n') take();
            if (pos_ >= src_.size() || src_[pos_] != '\'')
                throw ParseError(tok_.line, tok_.col, "unterminated string literal");
            tok_.type = TokType::String;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            take();
            return;
        }
        static const char* cmps[] = {"==", "!=", "<=", ">="};
        for (const char* op : cmps) {
            if (src_.substr(pos_, 2) == op) {
                tok_.type = TokType::Cmp;
                tok_.text = op;
                take();
                take();
                return;
            }
        }
        if (c == '<' || c == '>') {
            tok_.type = TokType::Cmp;
            tok_.text = std::string(1, c);
            take();
            return;
        }
        if (std::string("=;,()$.*#").find(c) != std::string::npos) {
            tok_.type = TokType::Punct;
            tok_.text = std::string(1, c);
            take();
            return;
        }
        throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
                while (pos_ < src_.size() && src_[pos_] != '\n') take();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                take();
            } else {
                break;
            }
        }
    }

    void take() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view src_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

inline bool is_keyword(const std::string& ident) {
    static const char* kws[] = {"load", "store", "into", "as", "using", "foreach",
                                "generate", "filter", "by", "and", "join", "group",
                                "cogroup", "distinct", "union"};
    std::string l = lower(ident);
    for (const char* kw : kws)
        if (l == kw) return true;
    return false;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    static LogicalPlan parse(std::string_view script) {
        Parser p(script);
        p.run();
        return std::move(p.plan_);
    }

private:
    using Token = detail::Token;
    using TokType = detail::TokType;

    explicit Parser(std::string_view src) : lex_(src) {}

    void run() {
        while (lex_.peek().type != TokType::End) statement();
    }

    [[noreturn]] void fail(const Token& at, const std::string& msg) {
        std::string got = at.type == TokType::End ? "end of input" : "'" + at.text + "'";
        throw ParseError(at.line, at.col, msg + ", got " + got);
    }

    bool peek_kw(const char* kw) {
        const Token& t = lex_.peek();
        return t.type == TokType::Ident && detail::lower(t.text) == kw;
    }

    Token expect_kw(const char* kw) {
        if (!peek_kw(kw)) fail(lex_.peek(), std::string("expected '") + kw + "'");
        return lex_.next();
    }

    Token expect_punct(const char* p) {
        const Token& t = lex_.peek();
        if (t.type != TokType::Punct || t.text != p)
            fail(t, std::string("expected '") + p + "'");
        return lex_.next();
    }

    bool eat_punct(const char* p) {
        const Token& t = lex_.peek();
        if (t.type == TokType::Punct && t.text == p) {
            lex_.next();
            return true;
        }
        return false;
    }

    Token expect_ident(const char* what) {
        const Token& t = lex_.peek();
        if (t.type != TokType::Ident) fail(t, std::string("expected ") + what);
        return lex_.next();
    }

    Token expect_string(const char* what) {
        const Token& t = lex_.peek();
        if (t.type != TokType::String) fail(t, std::string("expected ") + what);
        return lex_.next();
    }

    int resolve_alias(const Token& t) {
        auto it = plan_.alias_def.find(t.text);
        if (it == plan_.alias_def.end())
            throw ParseError(t.line, t.col, "undefined alias '" + t.text + "'");
        return it->second;
    }

    void statement() {
        Token head = lex_.peek();
        if (peek_kw("store")) {
            lex_.next();
            Statement st;
            st.kind = StmtKind::Store;
            st.line = head.line;
            st.col = head.col;
            Token src = expect_ident("alias");
            st.inputs.push_back(resolve_alias(src));
            st.input_aliases.push_back(src.text);
            expect_kw("into");
            st.dataset = expect_string("dataset path").text;
            expect_punct(";");
            push(std::move(st));
            return;
        }
        if (head.type != TokType::Ident || detail::is_keyword(head.text))
            fail(head, "expected alias or 'store'");
        Token alias = lex_.next();
        if (plan_.alias_def.count(alias.text))
            throw ParseError(alias.line, alias.col,
                             "duplicate alias '" + alias.text + "'");
        expect_punct("=");
        Statement st = expression();
        st.alias = alias.text;
        st.line = alias.line;
        st.col = alias.col;
        expect_punct(";");
        int id = push(std::move(st));
        plan_.alias_def[alias.text] = id;
    }

    int push(Statement st) {
        st.id = static_cast<int>(plan_.stmts.size());
        plan_.stmts.push_back(std::move(st));
        return plan_.stmts.back().id;
    }

    Statement expression() {
        if (peek_kw("load")) return load_expr();
        if (peek_kw("foreach")) return foreach_expr();
        if (peek_kw("filter")) return filter_expr();
        if (peek_kw("join")) return keyed_expr(StmtKind::Join);
        if (peek_kw("cogroup")) return keyed_expr(StmtKind::CoGroup);
        if (peek_kw("group")) return keyed_expr(StmtKind::Group);
        if (peek_kw("distinct")) return distinct_expr();
        if (peek_kw("union")) return union_expr();
        fail(lex_.peek(), "expected operator keyword");
    }

    Statement load_expr() {
        lex_.next();
        Statement st;
        st.kind = StmtKind::Load;
        st.dataset = expect_string("dataset path").text;
        if (peek_kw("as") || peek_kw("using")) {
            lex_.next();
            expect_punct("(");
            while (true) {
                Column c;
                c.name = expect_ident("column name").text;
                if (eat_punct("#")) {
                    expect_kw("bag");
                    expect_punct("(");
                    c.is_bag = true;
                    while (true) {
                        c.inner.push_back(expect_ident("bag field name").text);
                        if (!eat_punct(",")) break;
                    }
                    expect_punct(")");
                }
                st.load_schema.push_back(std::move(c));
                if (!eat_punct(",")) break;
            }
            expect_punct(")");
        }
        return st;
    }

    ColRef col_ref() {
        ColRef r;
        const Token& t = lex_.peek();
        r.line = t.line;
        r.col = t.col;
        if (t.type == TokType::Punct && t.text == "$") {
            lex_.next();
            Token num = lex_.next();
            if (num.type != TokType::Number || num.text.find('.') != std::string::npos ||
                num.text[0] == '-')
                fail(num, "expected column position");
            r.positional = true;
            r.pos = std::stoi(num.text);
            return r;
        }
        if (t.type != TokType::Ident) fail(t, "expected column reference");
        r.name = lex_.next().text;
        return r;
    }

    Statement foreach_expr() {
        lex_.next();
        Statement st;
        st.kind = StmtKind::Foreach;
        Token src = expect_ident("alias");
        st.inputs.push_back(resolve_alias(src));
        st.input_aliases.push_back(src.text);
        expect_kw("generate");
        while (true) {
            st.items.push_back(gen_item());
            if (!eat_punct(",")) break;
        }
        return st;
    }

    GenItem gen_item() {
        GenItem item;
        const Token& t = lex_.peek();
        item.at_line = t.line;
        item.at_col = t.col;
        if (t.type == TokType::Ident) {
            std::string l = detail::lower(t.text);
            if (l == "group") {
                lex_.next();
                item.type = GenItem::Type::GroupKey;
                return item;
            }
            Token name = lex_.next();
            if (eat_punct("(")) {
                auto fn = agg_fn_from_name(detail::lower(name.text));
                if (!fn)
                    throw ParseError(name.line, name.col,
                                     "unknown aggregate function '" + name.text + "'");
                item.type = GenItem::Type::Agg;
                item.fn = *fn;
                if (eat_punct("*")) {
                    item.count_star = true;
                } else {
                    item.arg = col_ref();
                    if (!item.arg.positional && eat_punct(".")) {
                        item.arg.qualifier = item.arg.name;
                        item.arg.name = expect_ident("field name").text;
                    }
                }
                expect_punct(")");
                return item;
            }
            item.type = GenItem::Type::Col;
            item.col.name = name.text;
            item.col.line = name.line;
            item.col.col = name.col;
            return item;
        }
        item.type = GenItem::Type::Col;
        item.col = col_ref();
        return item;
    }

    Statement filter_expr() {
        lex_.next();
        Statement st;
        st.kind = StmtKind::Filter;
        Token src = expect_ident("alias");
        st.inputs.push_back(resolve_alias(src));
        st.input_aliases.push_back(src.text);
        expect_kw("by");
        while (true) {
            st.pred.conjuncts.push_back(comparison());
            if (!peek_kw("and")) break;
            lex_.next();
        }
        return st;
    }

    Operand operand() {
        const Token& t = lex_.peek();
        if (t.type == TokType::Number)
            return {OperandKind::Number, lex_.next().text};
        if (t.type == TokType::String)
            return {OperandKind::String, lex_.next().text};
        ColRef r = col_ref();
        if (r.positional) return {OperandKind::Column, "$" + std::to_string(r.pos)};
        return {OperandKind::Column, r.name};
    }

    Comparison comparison() {
        Comparison c;
        c.lhs = operand();
        const Token& t = lex_.peek();
        std::string op_text;
        if (t.type == TokType::Cmp) {
            op_text = lex_.next().text;
        } else if (t.type == TokType::Punct && t.text == "=") {
            lex_.next();
            op_text = "==";
        } else {
            fail(t, "expected comparison operator");
        }
        static const std::pair<const char*, CmpOp> ops[] = {
            {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}, {"<", CmpOp::Lt},
            {"<=", CmpOp::Le}, {">", CmpOp::Gt},  {">=", CmpOp::Ge},
        };
        for (auto& [txt, op] : ops)
            if (op_text == txt) c.op = op;
        c.rhs = operand();
        return c;
    }

    std::vector<ColRef> key_spec() {
        std::vector<ColRef> keys;
        if (eat_punct("(")) {
            while (true) {
                keys.push_back(col_ref());
                if (!eat_punct(",")) break;
            }
            expect_punct(")");
        } else {
            keys.push_back(col_ref());
        }
        return keys;
    }

    Statement keyed_expr(StmtKind kind) {
        lex_.next();
        Statement st;
        st.kind = kind;
        while (true) {
            Token src = expect_ident("alias");
            st.inputs.push_back(resolve_alias(src));
            st.input_aliases.push_back(src.text);
            expect_kw("by");
            st.keys.push_back(key_spec());
            if (kind == StmtKind::Group || !eat_punct(",")) break;
        }
        if (kind != StmtKind::Group && st.inputs.size() < 2)
            fail(lex_.peek(), "expected ',' and another input");
        return st;
    }

    Statement distinct_expr() {
        lex_.next();
        Statement st;
        st.kind = StmtKind::Distinct;
        Token src = expect_ident("alias");
        st.inputs.push_back(resolve_alias(src));
        st.input_aliases.push_back(src.text);
        return st;
    }

    Statement union_expr() {
        lex_.next();
        Statement st;
        st.kind = StmtKind::Union;
        while (true) {
            Token src = expect_ident("alias");
            st.inputs.push_back(resolve_alias(src));
            st.input_aliases.push_back(src.text);
            if (!eat_punct(",")) break;
        }
        if (st.inputs.size() < 2) fail(lex_.peek(), "expected ',' and another input");
        return st;
    }

    detail::Lexer lex_;
    LogicalPlan plan_;
};

inline LogicalPlan parse_script(std::string_view script) { return Parser::parse(script); }

// ---------------------------------------------------------------------------
// Validator

namespace detail {

struct Resolver {
    LogicalPlan& plan;
    std::vector<Diagnostic>& diags;

    void diag(const Statement& st, int line, int col, const std::string& msg) {
        diags.push_back({st.id, st.alias, line ? line : st.line, col ? col : st.col, msg});
    }

    // Resolves a reference against a schema: positional by index, named by
    // exact match first, then by unique ".name" suffix.
    std::optional<int> resolve(const Statement& st, const SchemaDef& schema,
                               const ColRef& ref) {
        if (ref.positional) {
            if (ref.pos < 0 || ref.pos >= static_cast<int>(schema.size())) {
                diag(st, ref.line, ref.col,
                     "position $" + std::to_string(ref.pos) + " out of range (input has " +
                         std::to_string(schema.size()) + " columns)");
                return std::nullopt;
            }
            return ref.pos;
        }
        int exact = schema_index(schema, ref.name);
        if (exact >= 0) return exact;
        std::vector<int> suffix;
        for (size_t i = 0; i < schema.size(); ++i) {
            const std::string& n = schema[i].name;
            if (n.size() > ref.name.size() + 1 &&
                n.compare(n.size() - ref.name.size(), ref.name.size(), ref.name) == 0 &&
                n[n.size() - ref.name.size() - 1] == '.')
                suffix.push_back(static_cast<int>(i));
        }
        if (suffix.size() == 1) return suffix[0];
        diag(st, ref.line, ref.col,
             suffix.empty() ? "unknown column '" + ref.name + "'"
                            : "ambiguous column '" + ref.name + "'");
        return std::nullopt;
    }

    bool schema_is_flat(const SchemaDef& s) {
        return std::none_of(s.begin(), s.end(), [](const Column& c) { return c.is_bag; });
    }

    void run() {
        for (auto& st : plan.stmts) visit(st);
    }

    void visit(Statement& st) {
        std::vector<const SchemaDef*> ins;
        for (int input : st.inputs) ins.push_back(&plan.stmts[static_cast<size_t>(input)].out_schema);
        switch (st.kind) {
            case StmtKind::Load:
                st.out_schema = st.load_schema;
                break;
            case StmtKind::Store:
                st.out_schema = *ins[0];
                break;
            case StmtKind::Filter: {
                st.resolved_pred = st.pred;
                for (auto& cmp : st.resolved_pred.conjuncts) {
                    for (Operand* o : {&cmp.lhs, &cmp.rhs}) {
                        if (o->kind != OperandKind::Column) continue;
                        ColRef ref;
                        ref.line = st.line;
                        ref.col = st.col;
                        if (!o->text.empty() && o->text[0] == '$') {
                            ref.positional = true;
                            ref.pos = std::stoi(o->text.substr(1));
                        } else {
                            ref.name = o->text;
                        }
                        auto idx = resolve(st, *ins[0], ref);
                        if (!idx) continue;
                        const Column& c = (*ins[0])[static_cast<size_t>(*idx)];
                        if (c.is_bag) {
                            diag(st, 0, 0, "predicate column '" + c.name + "' is a bag");
                            continue;
                        }
                        o->text = c.name;
                    }
                }
                canonicalize(st.resolved_pred);
                st.out_schema = *ins[0];
                break;
            }
            case StmtKind::Foreach:
                visit_foreach(st, *ins[0]);
                break;
            case StmtKind::Join:
            case StmtKind::Group:
            case StmtKind::CoGroup: {
                size_t nkeys = st.keys.empty() ? 0 : st.keys[0].size();
                bool ok = true;
                for (size_t i = 0; i < st.inputs.size(); ++i) {
                    if (!schema_is_flat(*ins[i])) {
                        diag(st, 0, 0, "input '" + st.input_aliases[i] +
                                           "' must be flat (no bag columns)");
                        ok = false;
                        continue;
                    }
                    if (st.keys[i].size() != nkeys) {
                        diag(st, 0, 0, "key count differs between inputs");
                        ok = false;
                    }
                    std::vector<std::string> resolved;
                    for (const auto& ref : st.keys[i]) {
                        auto idx = resolve(st, *ins[i], ref);
                        if (!idx) {
                            ok = false;
                            continue;
                        }
                        resolved.push_back((*ins[i])[static_cast<size_t>(*idx)].name);
                    }
                    st.resolved_keys.push_back(std::move(resolved));
                }
                if (!ok) break;
                std::vector<SchemaDef> schemas;
                for (auto* s : ins) schemas.push_back(*s);
                if (st.kind == StmtKind::Join)
                    st.out_schema = join_output_schema(schemas);
                else if (st.kind == StmtKind::Group)
                    st.out_schema = group_output_schema(schemas[0]);
                else
                    st.out_schema = cogroup_output_schema(schemas);
                break;
            }
            case StmtKind::Distinct:
                st.out_schema = *ins[0];
                break;
            case StmtKind::Union: {
                for (size_t i = 1; i < ins.size(); ++i) {
                    if (ins[i]->size() != ins[0]->size()) {
                        diag(st, 0, 0, "inputs have different column counts");
                        break;
                    }
                    bool bags_ok = true;
                    for (size_t c = 0; c < ins[0]->size(); ++c)
                        if ((*ins[i])[c].is_bag != (*ins[0])[c].is_bag) bags_ok = false;
                    if (!bags_ok) {
                        diag(st, 0, 0, "inputs have different bag layouts");
                        break;
                    }
                }
                st.out_schema = *ins[0];
                break;
            }
        }
    }

    void visit_foreach(Statement& st, const SchemaDef& in) {
        bool has_agg = std::any_of(st.items.begin(), st.items.end(), [](const GenItem& i) {
            return i.type == GenItem::Type::Agg;
        });
        st.is_aggregate = has_agg;
        if (!has_agg) {
            for (const auto& item : st.items) {
                ColRef ref = item.col;
                if (item.type == GenItem::Type::GroupKey) ref.name = "group";
                auto idx = resolve(st, in, ref);
                if (!idx) continue;
                st.proj_cols.push_back(in[static_cast<size_t>(*idx)].name);
            }
            SchemaDef out;
            for (const auto& name : st.proj_cols) {
                int idx = schema_index(in, name);
                out.push_back(in[static_cast<size_t>(idx)]);
            }
            detail::unique_names(out);
            st.out_schema = out;
            return;
        }
        // Aggregating foreach: every item is either the group key or an
        // aggregate over one of the input's bag columns.
        for (const auto& item : st.items) {
            if (item.type != GenItem::Type::Agg) {
                ColRef ref = item.col;
                if (item.type == GenItem::Type::GroupKey) ref.name = "group";
                auto idx = resolve(st, in, ref);
                if (!idx) continue;
                const Column& c = in[static_cast<size_t>(*idx)];
                if (c.is_bag) {
                    diag(st, item.at_line, item.at_col,
                         "'" + c.name + "' is a bag; only the group key and aggregates "
                         "may appear here");
                    continue;
                }
                if (c.name != "group") {
                    diag(st, item.at_line, item.at_col,
                         "only the group key may accompany aggregates");
                    continue;
                }
                AggItem out;
                out.is_key = true;
                st.agg_items.push_back(out);
                continue;
            }
            AggItem out;
            out.fn = item.fn;
            if (item.count_star) {
                int bag_idx = -1;
                int bags = 0;
                for (size_t i = 0; i < in.size(); ++i)
                    if (in[i].is_bag) {
                        ++bags;
                        bag_idx = static_cast<int>(i);
                    }
                if (item.fn != AggFn::Count || bags != 1) {
                    diag(st, item.at_line, item.at_col,
                         bags == 1 ? "'*' is only valid inside COUNT"
                                   : "'*' is ambiguous here; name the bag");
                    continue;
                }
                out.bag_col = in[static_cast<size_t>(bag_idx)].name;
                st.agg_items.push_back(out);
                continue;
            }
            const ColRef& arg = item.arg;
            int bag_idx = -1;
            std::string inner;
            if (!arg.qualifier.empty()) {
                // Alias-qualified: the bag that holds rows of that input alias.
                const Statement& producer = plan.stmts[static_cast<size_t>(st.inputs[0])];
                bag_idx = bag_slot_for_alias(producer, arg.qualifier, in);
                if (bag_idx < 0) {
                    diag(st, arg.line, arg.col,
                         "alias '" + arg.qualifier + "' is not an input of the group");
                    continue;
                }
                inner = arg.name;
            } else if (arg.positional) {
                auto idx = resolve(st, in, arg);
                if (!idx) continue;
                bag_idx = *idx;
            } else {
                // Bare name: grouped input alias, or bag column name.
                const Statement& producer = plan.stmts[static_cast<size_t>(st.inputs[0])];
                bag_idx = bag_slot_for_alias(producer, arg.name, in);
                if (bag_idx < 0) {
                    auto idx = resolve(st, in, arg);
                    if (!idx) continue;
                    bag_idx = *idx;
                }
            }
            const Column& bag = in[static_cast<size_t>(bag_idx)];
            if (!bag.is_bag) {
                diag(st, arg.line, arg.col, "aggregate argument must be a bag");
                continue;
            }
            out.bag_col = bag.name;
            if (!inner.empty()) {
                auto found = std::find(bag.inner.begin(), bag.inner.end(), inner);
                if (found == bag.inner.end()) {
                    // allow suffix match inside the bag as well
                    std::vector<std::string> hits;
                    for (const auto& n : bag.inner)
                        if (n.size() > inner.size() + 1 &&
                            n.compare(n.size() - inner.size(), inner.size(), inner) == 0 &&
                            n[n.size() - inner.size() - 1] == '.')
                            hits.push_back(n);
                    if (hits.size() != 1) {
                        diag(st, arg.line, arg.col,
                             "bag '" + bag.name + "' has no field '" + inner + "'");
                        continue;
                    }
                    inner = hits[0];
                }
                out.inner_col = inner;
            }
            if (out.fn != AggFn::Count && out.inner_col.empty()) {
                diag(st, arg.line, arg.col,
                     std::string(agg_fn_name(out.fn)) + " needs a field inside the bag");
                continue;
            }
            if (out.fn == AggFn::Count) out.inner_col.clear();
            st.agg_items.push_back(out);
        }
        SchemaDef out;
        for (const auto& item : st.agg_items) {
            if (item.is_key) {
                out.push_back({"group", false, {}});
            } else {
                std::string name = agg_fn_name(item.fn);
                if (!item.inner_col.empty()) name += "_" + item.inner_col;
                out.push_back({std::move(name), false, {}});
            }
        }
        detail::unique_names(out);
        st.out_schema = out;
    }

    // Maps an input alias of a group/cogroup statement to the bag column slot
    // it produced.
    int bag_slot_for_alias(const Statement& producer, const std::string& alias,
                           const SchemaDef& schema) {
        if (producer.kind != StmtKind::Group && producer.kind != StmtKind::CoGroup)
            return -1;
        for (size_t i = 0; i < producer.input_aliases.size(); ++i) {
            if (producer.input_aliases[i] != alias) continue;
            std::string bag_name =
                producer.kind == StmtKind::Group ? "bag" : "bag" + std::to_string(i);
            int idx = schema_index(schema, bag_name);
            if (idx >= 0 && schema[static_cast<size_t>(idx)].is_bag) return idx;
        }
        return -1;
    }
};

} // namespace detail

// Computes output schemas and resolves all column references. Returns the
// list of problems found; an empty list means the plan is executable.
inline std::vector<Diagnostic> validate(LogicalPlan& plan) {
    std::vector<Diagnostic> diags;
    detail::Resolver{plan, diags}.run();
    return diags;
}

} // namespace restore
