#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "moelm/error.hpp"
#include "moelm/tensor.hpp"
#include "moelm/vocab.hpp"

namespace moelm {

// A conditional LM the decoder can search over. State is the model state
// after a prefix; next_distribution gives p(. | context, prefix).
template <class M>
concept DecodableModel = requires(const M& m, const typename M::State& s, TokenId t,
                                  const std::vector<std::string>& ctx) {
  { m.start(ctx) } -> std::same_as<typename M::State>;
  { m.advance(s, t) } -> std::same_as<typename M::State>;
  { m.next_distribution(s) } -> std::convertible_to<Vector>;
  { m.word(t) } -> std::convertible_to<std::string>;
  { m.kb_only(t) } -> std::convertible_to<bool>;
  { m.eor_id() } -> std::convertible_to<TokenId>;
};

struct DecodeConfig {
  std::size_t branch_limit = 8;
  std::size_t max_len = 40;  // tokens including <EOR>
  std::size_t max_continuations = 3;
  bool exact_mode = false;  // expand every successor
  std::size_t max_expansions = 20000;
  bool record_pops = false;

  void validate() const {
    if (branch_limit < 1) throw ConfigError("decode: branch_limit must be >= 1");
    if (max_len < 1) throw ConfigError("decode: max_len must be >= 1");
    if (max_expansions < 1) throw ConfigError("decode: max_expansions must be >= 1");
  }
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // ends with <EOR> unless truncated
  double cost = 0.0;            // -log p(tokens)
  bool truncated = false;
  std::size_t expansions = 0;
  std::vector<double> pop_costs;
};

namespace detail {

template <class State>
struct SearchNode {
  std::shared_ptr<const SearchNode> parent;
  TokenId token = 0;
  std::size_t length = 0;
  double cost = 0.0;
  std::size_t kb_only = 0;
  mutable std::shared_ptr<const State> state;  // filled when the node is expanded
};

template <class State>
std::vector<TokenId> path_of(const SearchNode<State>* n) {
  std::vector<TokenId> out(n->length);
  for (; n != nullptr && n->length > 0; n = n->parent.get()) out[n->length - 1] = n->token;
  return out;
}

}  // namespace detail

// Uniform-cost search over response prefixes. Costs are -log p, so the first
// popped node ending in <EOR> is the most probable complete response among
// those reachable under the branching limit. Successors that would emit a
// second kb-only token are pruned before the top-M cut.
template <DecodableModel M>
DecodeResult ucs_decode(const M& model, const std::vector<std::string>& context,
                        const DecodeConfig& config) {
  config.validate();
  if (context.empty() || context.back() != kEoc) {
    throw Error("ucs_decode: context must end with <EOC>");
  }
  using State = typename M::State;
  using Node = detail::SearchNode<State>;
  struct Entry {
    double cost;
    std::size_t seq;
    std::shared_ptr<const Node> node;
  };
  auto later = [](const Entry& a, const Entry& b) {
    return a.cost != b.cost ? a.cost > b.cost : a.seq > b.seq;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(later)> frontier(later);
  std::size_t seq = 0;

  auto root = std::make_shared<Node>();
  root->state = std::make_shared<const State>(model.start(context));
  frontier.push({0.0, seq++, root});

  const TokenId eor = model.eor_id();
  DecodeResult result;
  std::shared_ptr<const Node> best_partial = root;

  while (!frontier.empty()) {
    Entry e = frontier.top();
    frontier.pop();
    const Node& node = *e.node;
    if (config.record_pops) result.pop_costs.push_back(node.cost);
    if (node.length > 0 && node.token == eor) {
      result.tokens = detail::path_of(&node);
      result.cost = node.cost;
      return result;
    }
    if (node.length > best_partial->length ||
        (node.length == best_partial->length && node.cost < best_partial->cost)) {
      best_partial = e.node;
    }
    if (node.length >= config.max_len) continue;
    if (result.expansions >= config.max_expansions) break;
    ++result.expansions;
    if (!node.state) {
      node.state = std::make_shared<const State>(model.advance(*node.parent->state, node.token));
    }
    const Vector dist = model.next_distribution(*node.state);

    std::vector<TokenId> cand;
    cand.reserve(dist.size());
    for (TokenId t = 0; t < dist.size(); ++t) {
      if (!(dist[t] > 0)) continue;
      if (node.kb_only >= 1 && model.kb_only(t)) continue;
      cand.push_back(t);
    }
    const std::size_t m = config.exact_mode ? cand.size() : std::min(config.branch_limit, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + m, cand.end(), [&](TokenId a, TokenId b) {
      return dist[a] != dist[b] ? dist[a] > dist[b] : a < b;
    });
    for (std::size_t i = 0; i < m; ++i) {
      const TokenId t = cand[i];
      auto child = std::make_shared<Node>();
      child->parent = e.node;
      child->token = t;
      child->length = node.length + 1;
      child->cost = node.cost - std::log(dist[t]);
      child->kb_only = node.kb_only + (model.kb_only(t) ? 1 : 0);
      frontier.push({child->cost, seq++, std::move(child)});
    }
  }
  result.tokens = detail::path_of(best_partial.get());
  result.cost = best_partial->cost;
  result.truncated = true;
  return result;
}

// Argmax at each step, under the same one-answer constraint.
template <DecodableModel M>
DecodeResult greedy_decode(const M& model, const std::vector<std::string>& context,
                           const DecodeConfig& config) {
  config.validate();
  DecodeResult r;
  auto state = model.start(context);
  std::size_t kb_only = 0;
  const TokenId eor = model.eor_id();
  while (r.tokens.size() < config.max_len) {
    const Vector dist = model.next_distribution(state);
    TokenId best = 0;
    double bp = -1.0;
    for (TokenId t = 0; t < dist.size(); ++t) {
      if (kb_only >= 1 && model.kb_only(t)) continue;
      if (dist[t] > bp) {
        bp = dist[t];
        best = t;
      }
    }
    if (!(bp > 0)) break;
    r.tokens.push_back(best);
    r.cost -= std::log(bp);
    kb_only += model.kb_only(best) ? 1 : 0;
    ++r.expansions;
    if (best == eor) return r;
    state = model.advance(state, best);
  }
  r.truncated = true;
  return r;
}

// Context for the next segment: the previous response is appended as an agent
// segment (without <EOR>) before a fresh <EOC>.
inline std::vector<std::string> continue_context(const std::vector<std::string>& context,
                                                 const std::vector<std::string>& response) {
  std::vector<std::string> out(context.begin(), context.end());
  if (!out.empty() && out.back() == kEoc) out.pop_back();
  out.emplace_back(kAgent);
  for (const auto& w : response) {
    if (w != kEor) out.push_back(w);
  }
  out.emplace_back(kEoc);
  return out;
}

struct DecodedSegment {
  std::vector<std::string> context;  // what this segment was decoded from
  std::vector<std::string> words;    // response words including <EOR>
  DecodeResult result;
};

// Decodes again whenever a segment ends in <pause> or <newline> just before
// <EOR>, at most max_continuations extra times.
template <DecodableModel M>
std::vector<DecodedSegment> decode_with_continuation(const M& model,
                                                     const std::vector<std::string>& context,
                                                     const DecodeConfig& config) {
  std::vector<DecodedSegment> segments;
  std::vector<std::string> ctx = context;
  for (std::size_t i = 0; i <= config.max_continuations; ++i) {
    DecodedSegment seg;
    seg.context = ctx;
    seg.result = ucs_decode(model, ctx, config);
    for (auto t : seg.result.tokens) seg.words.emplace_back(model.word(t));
    segments.push_back(seg);
    if (seg.result.truncated) break;
    const auto& w = seg.words;
    const bool more = w.size() >= 2 && (w[w.size() - 2] == kPause || w[w.size() - 2] == kNewline);
    if (!more) break;
    ctx = continue_context(ctx, w);
  }
  return segments;
}

}  // namespace moelm
