//! Lowers MiniLang syntax into a code property graph.
//!
//! Operators become CALL nodes named `<operator>.*` with 1-based argument
//! labels. The CFG is statement-level. Data flow is:
//! - REACHING_DEF from a definition to every use it reaches (classic
//!   reaching definitions, iterated to a fixed point), and from operands to
//!   the expression whose value they feed;
//! - ARG_TO_PARAM / RETURN_TO_CALL between call sites and user functions.
//!
//! `sanitize(x)` produces a value with no incoming flow from `x`.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::builtins;
use crate::cpg::{
    CodePropertyGraph, Edge, EdgeKind, Node, NodeId, NodeKind, OP_ADDITION, OP_ASSIGNMENT,
    OP_EQUALS, OP_FIELD_ACCESS, OP_INDEX_ACCESS,
};

/// Build the CPG for a single file.
pub fn build_cpg(ast: &MiniLangAst) -> CodePropertyGraph {
    build_project_cpg(std::slice::from_ref(ast))
}

/// Build one CPG over several files; calls resolve across files by name.
pub fn build_project_cpg(asts: &[MiniLangAst]) -> CodePropertyGraph {
    let mut b = Builder::default();
    for ast in asts {
        b.file = ast.file.clone();
        b.sources.insert(ast.file.clone(), ast.source.clone());
        b.lower_global(ast);
        for f in &ast.functions {
            b.lower_function(f);
        }
    }
    b.resolve_calls();
    CodePropertyGraph::from_parts(b.nodes, b.edges, b.sources)
}

#[derive(Debug, Clone, Copy)]
struct Def {
    var_idx: usize,
    node: NodeId,
    strong: bool,
}

/// Per-statement facts for reaching definitions.
#[derive(Debug, Default)]
struct CfgFacts {
    uses: Vec<(String, NodeId)>,
    defs: Vec<(String, NodeId, bool)>,
}

struct CallSite {
    call: NodeId,
    callee: String,
    args: Vec<NodeId>,
}

struct MethodInfo {
    id: NodeId,
    params: Vec<NodeId>,
    returns: Vec<NodeId>,
}

#[derive(Default)]
struct Builder {
    next: NodeId,
    file: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    sources: BTreeMap<String, String>,
    calls: Vec<CallSite>,
    methods: BTreeMap<String, Vec<MethodInfo>>,
    // state of the method currently being lowered
    facts: BTreeMap<NodeId, CfgFacts>,
    cfg_succ: BTreeMap<NodeId, BTreeSet<NodeId>>,
    returns: Vec<NodeId>,
}

impl Builder {
    fn add(&mut self, kind: NodeKind, name: &str, code: String, pos: Pos) -> NodeId {
        let id = self.next;
        self.next += 1;
        self.nodes.push(Node {
            id,
            kind,
            name: name.to_string(),
            code,
            line: pos.line.max(1),
            column: pos.column,
            file: self.file.clone(),
        });
        id
    }

    fn ast_edge(&mut self, parent: NodeId, child: NodeId, order: u32) {
        self.edges.push(Edge::ast(parent, child, order));
    }

    fn flow(&mut self, src: NodeId, dst: NodeId) {
        self.edges.push(Edge::new(src, dst, EdgeKind::ReachingDef));
    }

    fn lower_global(&mut self, ast: &MiniLangAst) {
        let pos = Pos { line: 1, column: 0 };
        let method = self.add(NodeKind::Method, builtins::GLOBAL_METHOD, ast.file.clone(), pos);
        let body = self.add(NodeKind::Block, "<block>", "{ ... }".into(), pos);
        self.ast_edge(method, body, 1);
        self.lower_method_body(method, Vec::new(), body, &ast.statements, builtins::GLOBAL_METHOD);
    }

    fn lower_function(&mut self, f: &FunctionDecl) -> NodeId {
        let names: Vec<&str> = f.params.iter().map(|(n, _)| n.as_str()).collect();
        let sig = format!("function {}({})", f.name, names.join(", "));
        let method = self.add(NodeKind::Method, &f.name, sig, f.pos);
        let mut params = Vec::new();
        for (i, (name, pos)) in f.params.iter().enumerate() {
            let p = self.add(NodeKind::Param, name, name.clone(), *pos);
            self.ast_edge(method, p, i as u32 + 1);
            params.push(p);
        }
        let body = self.add(NodeKind::Block, "<block>", "{ ... }".into(), f.pos);
        self.ast_edge(method, body, f.params.len() as u32 + 1);
        self.lower_method_body(method, params, body, &f.body, &f.name);
        method
    }

    /// Lower one method body, then run reaching definitions over its CFG.
    fn lower_method_body(
        &mut self,
        method: NodeId,
        params: Vec<NodeId>,
        body: NodeId,
        stmts: &[Stmt],
        name: &str,
    ) {
        let saved_facts = std::mem::take(&mut self.facts);
        let saved_succ = std::mem::take(&mut self.cfg_succ);
        let saved_returns = std::mem::take(&mut self.returns);

        let entry_facts = CfgFacts {
            uses: Vec::new(),
            defs: params
                .iter()
                .map(|&p| (self.node_name(p), p, true))
                .collect(),
        };
        self.facts.insert(method, entry_facts);
        self.lower_block(body, stmts, vec![method]);
        self.solve_reaching_defs(method);

        let returns = std::mem::replace(&mut self.returns, saved_returns);
        self.methods.entry(name.to_string()).or_default().push(MethodInfo {
            id: method,
            params,
            returns,
        });
        self.facts = saved_facts;
        self.cfg_succ = saved_succ;
    }

    fn node_name(&self, id: NodeId) -> String {
        self.nodes[id as usize].name.clone()
    }

    fn cfg_edge(&mut self, from: NodeId, to: NodeId) {
        self.cfg_succ.entry(from).or_default().insert(to);
    }

    /// Lower statements as AST children of `block`; returns CFG exits.
    fn lower_block(&mut self, block: NodeId, stmts: &[Stmt], mut preds: Vec<NodeId>) -> Vec<NodeId> {
        let mut order = 0;
        for stmt in stmts {
            if let StmtKind::Function(f) = &stmt.kind {
                // nested declarations are separate method roots
                self.lower_function(f);
                continue;
            }
            order += 1;
            preds = self.lower_stmt(block, order, stmt, preds);
        }
        preds
    }

    fn lower_stmt(&mut self, parent: NodeId, order: u32, stmt: &Stmt, preds: Vec<NodeId>) -> Vec<NodeId> {
        match &stmt.kind {
            StmtKind::Let { name, name_pos, value } => {
                let code = format!("let {name} = {value}");
                let call = self.add(NodeKind::Call, OP_ASSIGNMENT, code, stmt.pos);
                self.ast_edge(parent, call, order);
                let mut facts = CfgFacts::default();
                let target = self.add(NodeKind::Identifier, name, name.clone(), *name_pos);
                self.ast_edge(call, target, 1);
                let rhs = self.lower_expr(call, 2, value, &mut facts);
                self.flow(rhs, target);
                facts.defs.push((name.clone(), target, true));
                self.simple_cfg(call, facts, preds)
            }
            StmtKind::Assign { target, value } => {
                let code = format!("{target} = {value}");
                let call = self.add(NodeKind::Call, OP_ASSIGNMENT, code, stmt.pos);
                self.ast_edge(parent, call, order);
                let mut facts = CfgFacts::default();
                let lhs = match &target.kind {
                    ExprKind::Ident(name) => {
                        let id = self.add(NodeKind::Identifier, name, name.clone(), target.pos);
                        self.ast_edge(call, id, 1);
                        facts.defs.push((name.clone(), id, true));
                        id
                    }
                    _ => {
                        // a write through obj[k] / obj.f weakly defines obj
                        let id = self.lower_lvalue(call, target, &mut facts);
                        if let Some(root) = target.root_variable() {
                            facts.defs.push((root.to_string(), id, false));
                        }
                        id
                    }
                };
                let rhs = self.lower_expr(call, 2, value, &mut facts);
                self.flow(rhs, lhs);
                self.simple_cfg(call, facts, preds)
            }
            StmtKind::Expr(e) => {
                let mut facts = CfgFacts::default();
                let id = self.lower_expr(parent, order, e, &mut facts);
                self.simple_cfg(id, facts, preds)
            }
            StmtKind::Return(value) => {
                let code = match value {
                    Some(v) => format!("return {v}"),
                    None => "return".into(),
                };
                let ret = self.add(NodeKind::Return, "return", code, stmt.pos);
                self.ast_edge(parent, ret, order);
                let mut facts = CfgFacts::default();
                if let Some(v) = value {
                    let e = self.lower_expr(ret, 1, v, &mut facts);
                    self.flow(e, ret);
                }
                self.returns.push(ret);
                self.simple_cfg(ret, facts, preds);
                Vec::new()
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let node = self.add(NodeKind::Block, "<if>", format!("if ({cond})"), stmt.pos);
                self.ast_edge(parent, node, order);
                let mut facts = CfgFacts::default();
                let c = self.lower_expr(node, 1, cond, &mut facts);
                let c_exits = self.simple_cfg(c, facts, preds);
                let then_block = self.add(NodeKind::Block, "<block>", "{ ... }".into(), stmt.pos);
                self.ast_edge(node, then_block, 2);
                let mut exits = self.lower_block(then_block, then_body, c_exits.clone());
                match else_body {
                    Some(body) => {
                        let else_block =
                            self.add(NodeKind::Block, "<block>", "{ ... }".into(), stmt.pos);
                        self.ast_edge(node, else_block, 3);
                        exits.extend(self.lower_block(else_block, body, c_exits));
                    }
                    None => exits.extend(c_exits),
                }
                exits.sort_unstable();
                exits.dedup();
                exits
            }
            StmtKind::While { cond, body } => {
                let node = self.add(NodeKind::Block, "<while>", format!("while ({cond})"), stmt.pos);
                self.ast_edge(parent, node, order);
                let mut facts = CfgFacts::default();
                let c = self.lower_expr(node, 1, cond, &mut facts);
                let c_exits = self.simple_cfg(c, facts, preds);
                let body_block = self.add(NodeKind::Block, "<block>", "{ ... }".into(), stmt.pos);
                self.ast_edge(node, body_block, 2);
                for exit in self.lower_block(body_block, body, c_exits.clone()) {
                    self.cfg_edge(exit, c);
                }
                c_exits
            }
            StmtKind::Function(_) => preds,
        }
    }

    fn simple_cfg(&mut self, node: NodeId, facts: CfgFacts, preds: Vec<NodeId>) -> Vec<NodeId> {
        for p in preds {
            self.cfg_edge(p, node);
        }
        self.facts.insert(node, facts);
        vec![node]
    }

    /// Lower the target of an index/field write. Its receiver chain is read,
    /// but no value flows from it into the written location.
    fn lower_lvalue(&mut self, parent: NodeId, target: &Expr, facts: &mut CfgFacts) -> NodeId {
        let (op, receiver, second) = match &target.kind {
            ExprKind::Index { receiver, index } => (OP_INDEX_ACCESS, receiver, Some(index)),
            ExprKind::Field { receiver, .. } => (OP_FIELD_ACCESS, receiver, None),
            _ => unreachable!("lvalue checked by parser"),
        };
        let call = self.add(NodeKind::Call, op, target.to_string(), target.pos);
        self.ast_edge(parent, call, 1);
        self.lower_expr(call, 1, receiver, facts);
        match (second, &target.kind) {
            (Some(index), _) => {
                self.lower_expr(call, 2, index, facts);
            }
            (None, ExprKind::Field { field, field_pos, .. }) => {
                let lit = self.add(NodeKind::Literal, "", field.clone(), *field_pos);
                self.ast_edge(call, lit, 2);
            }
            _ => {}
        }
        call
    }

    /// Lower an rvalue expression; returns its root node.
    fn lower_expr(&mut self, parent: NodeId, order: u32, e: &Expr, facts: &mut CfgFacts) -> NodeId {
        let code = e.to_string();
        let id = match &e.kind {
            ExprKind::Str(_) | ExprKind::Num(_) | ExprKind::Object => {
                self.add(NodeKind::Literal, "", code, e.pos)
            }
            ExprKind::Ident(name) => {
                let id = self.add(NodeKind::Identifier, name, code, e.pos);
                facts.uses.push((name.clone(), id));
                id
            }
            ExprKind::Call { callee, args } => {
                let call = self.add(NodeKind::Call, callee, code, e.pos);
                self.ast_edge(parent, call, order);
                let arg_ids = args
                    .iter()
                    .enumerate()
                    .map(|(i, a)| self.lower_expr(call, i as u32 + 1, a, facts))
                    .collect();
                self.calls.push(CallSite {
                    call,
                    callee: callee.clone(),
                    args: arg_ids,
                });
                return call;
            }
            ExprKind::Index { receiver, index } => {
                let call = self.add(NodeKind::Call, OP_INDEX_ACCESS, code, e.pos);
                self.ast_edge(parent, call, order);
                let r = self.lower_expr(call, 1, receiver, facts);
                let i = self.lower_expr(call, 2, index, facts);
                self.flow(r, call);
                self.flow(i, call);
                return call;
            }
            ExprKind::Field {
                receiver,
                field,
                field_pos,
            } => {
                let call = self.add(NodeKind::Call, OP_FIELD_ACCESS, code, e.pos);
                self.ast_edge(parent, call, order);
                let r = self.lower_expr(call, 1, receiver, facts);
                let lit = self.add(NodeKind::Literal, "", field.clone(), *field_pos);
                self.ast_edge(call, lit, 2);
                self.flow(r, call);
                return call;
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let name = match op {
                    BinOp::Add => OP_ADDITION,
                    BinOp::Eq => OP_EQUALS,
                };
                let call = self.add(NodeKind::Call, name, code, e.pos);
                self.ast_edge(parent, call, order);
                let l = self.lower_expr(call, 1, lhs, facts);
                let r = self.lower_expr(call, 2, rhs, facts);
                self.flow(l, call);
                self.flow(r, call);
                return call;
            }
        };
        self.ast_edge(parent, id, order);
        id
    }

    /// Classic iterative reaching definitions over the current method's CFG,
    /// then one REACHING_DEF edge per (definition, reached use) pair.
    fn solve_reaching_defs(&mut self, entry: NodeId) {
        let mut var_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut defs: Vec<Def> = Vec::new();
        let mut gen: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
        for (&n, f) in &self.facts {
            for (var, node, strong) in &f.defs {
                let next = var_index.len();
                let var_idx = *var_index.entry(var.clone()).or_insert(next);
                gen.entry(n).or_default().insert(defs.len());
                defs.push(Def {
                    var_idx,
                    node: *node,
                    strong: *strong,
                });
            }
        }

        let mut preds: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (&from, tos) in &self.cfg_succ {
            for &to in tos {
                preds.entry(to).or_default().push(from);
            }
        }
        let cfg_nodes: Vec<NodeId> = self.facts.keys().copied().collect();

        let mut out: BTreeMap<NodeId, BTreeSet<usize>> =
            cfg_nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for &n in &cfg_nodes {
                let inset = in_set(n, &preds, &out);
                let killed: BTreeSet<usize> = gen
                    .get(&n)
                    .into_iter()
                    .flatten()
                    .filter(|&&d| defs[d].strong)
                    .map(|&d| defs[d].var_idx)
                    .collect();
                let mut new_out: BTreeSet<usize> = inset
                    .into_iter()
                    .filter(|&d| !killed.contains(&defs[d].var_idx))
                    .collect();
                new_out.extend(gen.get(&n).into_iter().flatten().copied());
                if out[&n] != new_out {
                    out.insert(n, new_out);
                    changed = true;
                }
            }
        }

        let mut new_edges = Vec::new();
        for &n in &cfg_nodes {
            let inset = in_set(n, &preds, &out);
            for (var, use_node) in &self.facts[&n].uses {
                let Some(&vi) = var_index.get(var) else { continue };
                for &d in &inset {
                    if defs[d].var_idx == vi {
                        new_edges.push(Edge::new(defs[d].node, *use_node, EdgeKind::ReachingDef));
                    }
                }
            }
        }
        self.edges.extend(new_edges);

        for (&from, tos) in &self.cfg_succ {
            for &to in tos {
                self.edges.push(Edge::new(from, to, EdgeKind::Cfg));
            }
        }
        debug_assert!(self.facts.contains_key(&entry));
    }

    /// Link call sites to user functions, or give library calls a value
    /// flow from their arguments (sanitizers excepted).
    fn resolve_calls(&mut self) {
        let calls = std::mem::take(&mut self.calls);
        for site in &calls {
            match self.methods.get(&site.callee) {
                Some(targets) if site.callee != builtins::GLOBAL_METHOD => {
                    let mut new_edges = Vec::new();
                    for m in targets {
                        new_edges.push(Edge::new(site.call, m.id, EdgeKind::CallEdge));
                        for (arg, param) in site.args.iter().zip(&m.params) {
                            new_edges.push(Edge::new(*arg, *param, EdgeKind::ArgToParam));
                        }
                        for ret in &m.returns {
                            new_edges.push(Edge::new(*ret, site.call, EdgeKind::ReturnToCall));
                        }
                    }
                    self.edges.extend(new_edges);
                }
                _ => {
                    if !builtins::is_sanitizer(&site.callee) {
                        for &arg in &site.args {
                            self.flow(arg, site.call);
                        }
                    }
                }
            }
        }
    }
}

fn in_set(
    n: NodeId,
    preds: &BTreeMap<NodeId, Vec<NodeId>>,
    out: &BTreeMap<NodeId, BTreeSet<usize>>,
) -> BTreeSet<usize> {
    preds
        .get(&n)
        .into_iter()
        .flatten()
        .flat_map(|p| out[p].iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{dataflow_reach_oracle, NodeSet};
    use crate::lang::parse_program;

    fn build(src: &str) -> CodePropertyGraph {
        let g = build_cpg(&parse_program(src, "t.mini").unwrap());
        g.validate().unwrap();
        g
    }

    fn find(g: &CodePropertyGraph, kind: NodeKind, name: &str, line: u32) -> NodeId {
        g.nodes()
            .find(|n| n.kind == kind && n.name == name && n.line == line)
            .unwrap_or_else(|| panic!("no {kind} {name} on line {line}"))
            .id
    }

    #[test]
    fn let_lowers_to_assignment_with_literal_argument_two() {
        let g = build("let x = 1;");
        let assigns: Vec<_> = g.nodes().filter(|n| n.name == OP_ASSIGNMENT).collect();
        assert_eq!(assigns.len(), 1);
        let lit = g.ast_child(assigns[0].id, 2).unwrap();
        assert_eq!(g.node(lit).unwrap().kind, NodeKind::Literal);
        assert_eq!(g.node(lit).unwrap().code, "1");
    }

    #[test]
    fn proto_read_is_index_access_under_argument_two() {
        let g = build("p = obj[\"__proto__\"];");
        let assign = find(&g, NodeKind::Call, OP_ASSIGNMENT, 1);
        let rhs = g.ast_child(assign, 2).unwrap();
        let rhs_node = g.node(rhs).unwrap();
        assert_eq!(rhs_node.name, OP_INDEX_ACCESS);
        let recv = g.ast_child(rhs, 1).unwrap();
        assert_eq!(g.node(recv).unwrap().name, "obj");
    }

    #[test]
    fn sanitizer_kills_flow() {
        let g = build("let a=input(); exec(sanitize(a));");
        let src = find(&g, NodeKind::Call, "input", 1);
        let exec = find(&g, NodeKind::Call, "exec", 1);
        let arg = g.ast_child(exec, 1).unwrap();
        let got = dataflow_reach_oracle(&g, &[src].into(), &[arg].into()).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn taint_chain_def_use_path() {
        // input() -> a(def) -> a(use) -> b(def) -> b(use, exec arg 1)
        let g = build("let a = input();\nlet b = a;\nexec(b);");
        let src = find(&g, NodeKind::Call, "input", 1);
        let a_def = find(&g, NodeKind::Identifier, "a", 1);
        let a_use = find(&g, NodeKind::Identifier, "a", 2);
        let b_def = find(&g, NodeKind::Identifier, "b", 2);
        let b_use = find(&g, NodeKind::Identifier, "b", 3);
        for (s, d) in [(src, a_def), (a_def, a_use), (a_use, b_def), (b_def, b_use)] {
            assert!(g.flow_successors(s).contains(&d), "missing flow {s}->{d}");
        }
        let got = dataflow_reach_oracle(&g, &[src].into(), &[b_use].into()).unwrap();
        assert_eq!(got, NodeSet::from([b_use]));
    }

    #[test]
    fn strong_update_kills_previous_definition() {
        let g = build("let a = input();\na = 1;\nexec(a);");
        let src = find(&g, NodeKind::Call, "input", 1);
        let use_ = find(&g, NodeKind::Identifier, "a", 3);
        assert!(dataflow_reach_oracle(&g, &[src].into(), &[use_].into())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn weak_update_keeps_previous_definition() {
        let g = build("let o = input();\no[\"k\"] = 1;\nexec(o);");
        let src = find(&g, NodeKind::Call, "input", 1);
        let use_ = find(&g, NodeKind::Identifier, "o", 3);
        let got = dataflow_reach_oracle(&g, &[src].into(), &[use_].into()).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn branches_merge_definitions() {
        let g = build("let a = 1;\nif (c) {\n a = input();\n}\nexec(a);");
        let src = find(&g, NodeKind::Call, "input", 3);
        let use_ = find(&g, NodeKind::Identifier, "a", 5);
        assert_eq!(
            dataflow_reach_oracle(&g, &[src].into(), &[use_].into()).unwrap().len(),
            1
        );
        let lit_def = find(&g, NodeKind::Identifier, "a", 1);
        assert!(g.flow_successors(lit_def).contains(&use_));
    }

    #[test]
    fn loop_carried_definition_reaches_condition() {
        let g = build("let i = 0;\nwhile (i) {\n i = input();\n}");
        let def = find(&g, NodeKind::Identifier, "i", 3);
        let cond_use = find(&g, NodeKind::Identifier, "i", 2);
        assert!(g.flow_successors(def).contains(&cond_use));
    }

    #[test]
    fn interprocedural_flow_through_params_and_returns() {
        let src = "function id(x) {\n return x;\n}\nlet a = input();\nexec(id(a));";
        let g = build(src);
        let input = find(&g, NodeKind::Call, "input", 4);
        let exec = find(&g, NodeKind::Call, "exec", 5);
        let arg = g.ast_child(exec, 1).unwrap();
        assert_eq!(
            dataflow_reach_oracle(&g, &[input].into(), &[arg].into()).unwrap().len(),
            1
        );
        assert!(g.edges().iter().any(|e| e.kind == EdgeKind::ArgToParam));
        assert!(g.edges().iter().any(|e| e.kind == EdgeKind::ReturnToCall));
        assert!(g.edges().iter().any(|e| e.kind == EdgeKind::CallEdge));
    }

    #[test]
    fn every_method_is_a_root() {
        let g = build("function f() { function g() { } }\nf();");
        let methods = g.nodes_of_kind(NodeKind::Method);
        assert_eq!(methods.len(), 3);
        assert_eq!(g.roots().len(), 3);
    }
}
