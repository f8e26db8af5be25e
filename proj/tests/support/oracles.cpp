#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "liatm/threat_kb.hpp"

namespace liatm::testing {

std::vector<std::vector<std::size_t>> adjacency(const dfd::Model& m) {
  std::vector<std::vector<std::size_t>> adj(m.elements().size());
  auto index = [&](const std::string& id) {
    for (std::size_t i = 0; i < m.elements().size(); ++i)
      if (m.elements()[i].id == id) return i;
    return m.elements().size();
  };
  for (const auto& f : m.flows()) adj[index(f.source)].push_back(index(f.target));
  return adj;
}

bool walk_exists(const std::vector<std::vector<std::size_t>>& adj, std::size_t from, std::size_t to,
                 std::size_t min_len, std::size_t max_len) {
  bool found = false;
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t at, std::size_t len) {
    if (found) return;
    if (len >= min_len && at == to) {
      found = true;
      return;
    }
    if (len == max_len) return;
    for (auto next : adj[at]) walk(next, len + 1);
  };
  walk(from, 0);
  return found;
}

RuleTriggers brute_force_triggers(const dfd::Model& m) {
  RuleTriggers r;
  const auto adj = adjacency(m);
  const auto& els = m.elements();
  const std::size_t n = els.size();
  // A shortest qualifying walk never needs more than n + 1 flows.
  const std::size_t bound = n + 1;
  for (std::size_t t = 0; t < n; ++t) {
    if (!els[t].has_tag("llm")) continue;
    bool indirect = false, reach = false, direct = false;
    for (std::size_t s = 0; s < n; ++s) {
      if (els[s].kind != dfd::ElementKind::ExternalEntity) continue;
      indirect = indirect || walk_exists(adj, s, t, 2, bound);
      reach = reach || walk_exists(adj, s, t, 1, bound);
      for (auto x : adj[s]) direct = direct || x == t;
    }
    if (indirect) r.indirect.insert(els[t].id);
    if (reach) r.reachable.insert(els[t].id);
    if ((direct || indirect) && els[t].has_tag("guardrails")) r.jailbreak.insert(els[t].id);

    if (walk_exists(adj, t, t, 1, n)) {
      std::string key;
      for (std::size_t v = 0; v < n; ++v) {
        const bool there = v == t || walk_exists(adj, t, v, 1, n);
        const bool back = v == t || walk_exists(adj, v, t, 1, n);
        if (there && back) key += (key.empty() ? "" : "+") + els[v].id;
      }
      r.selfrep.insert(key);
    }
  }
  return r;
}

RuleTriggers engine_triggers(const dfd::Model& m) {
  RuleTriggers r;
  for (const auto& t : kb::identify_threats(m)) {
    if (t.rule_id == kb::rule::kPromptInjectionIndirect) r.indirect.insert(t.subject_key());
    if (t.rule_id == kb::rule::kModelDos) r.reachable.insert(t.subject_key());
    if (t.rule_id == kb::rule::kJailbreak) r.jailbreak.insert(t.subject_key());
    if (t.rule_id == kb::rule::kSelfReplication) r.selfrep.insert(t.subject_key());
  }
  return r;
}

std::vector<rag::RetrievalResult> brute_force_search(const rag::VectorIndex& index,
                                                     const std::vector<double>& query, std::size_t k) {
  double qn = 0;
  for (double x : query) qn += x * x;
  std::vector<rag::RetrievalResult> all;
  if (qn == 0) return all;
  const auto& chunks = index.chunks();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    double dot = 0, cn = 0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      dot += query[d] * chunks[i].vector[d];
      cn += chunks[i].vector[d] * chunks[i].vector[d];
    }
    const double score = cn == 0 ? 0.0 : dot / (std::sqrt(qn) * std::sqrt(cn));
    all.push_back({i, chunks[i].doc_id, chunks[i].seq, chunks[i].text, score});
  }
  std::sort(all.begin(), all.end(), [&](const rag::RetrievalResult& a, const rag::RetrievalResult& b) {
    if (a.score != b.score) return a.score > b.score;
    const double wa = index.documents().at(a.doc_id).weight;
    const double wb = index.documents().at(b.doc_id).weight;
    if (wa != wb) return wa > wb;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.seq < b.seq;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::size_t best_union_size(const std::vector<qa::MrInstance>& all, std::size_t k) {
  std::size_t best = 0;
  std::vector<bool> pick(all.size(), false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(std::min(k, all.size())), true);
  do {
    std::set<std::string> u;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (pick[i]) u.insert(all[i].touched.begin(), all[i].touched.end());
    best = std::max(best, u.size());
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace liatm::testing
