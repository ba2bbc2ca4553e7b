#include "taxoria/filters.hpp"

#include <cctype>
#include <cmath>
#include <regex>
#include <set>

#include "taxoria/error.hpp"
#include "taxoria/http.hpp"

namespace taxoria {

namespace {

// Absorbs rounding in cosine so a hand-built 0.9 pair is not rejected
// because it evaluates to 0.8999999999999999.
constexpr double kThresholdSlack = 1e-12;

std::string sparql_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> case_variants(std::string_view label) {
  std::string lower(label), upper(label), title(label), first(label);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  bool word_start = true;
  for (auto& c : title) {
    auto uc = static_cast<unsigned char>(c);
    c = static_cast<char>(word_start ? std::toupper(uc) : std::tolower(uc));
    word_start = std::isspace(uc) || c == '-';
  }
  first = lower;
  if (!first.empty()) first[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(first[0])));
  std::vector<std::string> out;
  std::set<std::string> seen{std::string(label)};
  for (auto* v : {&lower, &first, &title, &upper})
    if (seen.insert(*v).second) out.push_back(*v);
  return out;
}

}  // namespace

std::string_view to_string(Outcome o) { return o == Outcome::Accepted ? "accepted" : "rejected"; }

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::Passed: return "passed";
    case Reason::DepthExceeded: return "depth-exceeded";
    case Reason::BelowThreshold: return "below-threshold";
    case Reason::Oov: return "oov";
    case Reason::JudgeBelowBaseline: return "judge-below-baseline";
    case Reason::KgInstance: return "kg-instance";
    case Reason::DuplicateSibling: return "duplicate-sibling";
    case Reason::Unparseable: return "unparseable";
  }
  return "unparseable";
}

std::optional<Reason> parse_reason(std::string_view s) {
  for (auto r : {Reason::Passed, Reason::DepthExceeded, Reason::BelowThreshold, Reason::Oov,
                 Reason::JudgeBelowBaseline, Reason::KgInstance, Reason::DuplicateSibling, Reason::Unparseable})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

nlohmann::ordered_json decision_to_json(const FilterDecision& d) {
  nlohmann::ordered_json j;
  j["candidate"] = d.candidate;
  j["parent_path"] = d.parent_path;
  j["outcome"] = std::string(to_string(d.outcome));
  j["reason"] = std::string(to_string(d.reason));
  if (d.similarity) j["similarity"] = *d.similarity;
  if (d.judge_score) j["judge_score"] = *d.judge_score;
  if (d.kg_entity) j["kg_entity"] = *d.kg_entity;
  if (d.warning) j["warning"] = *d.warning;
  return j;
}

FilterDecision decision_from_json(const nlohmann::json& j) {
  FilterDecision d;
  try {
    d.candidate = j.at("candidate").get<std::string>();
    d.parent_path = j.at("parent_path").get<NamePath>();
    d.outcome = j.at("outcome").get<std::string>() == "accepted" ? Outcome::Accepted : Outcome::Rejected;
    auto reason = parse_reason(j.at("reason").get<std::string>());
    if (!reason) throw Error(ErrorCode::FormatError, "unknown decision reason");
    d.reason = *reason;
    if (j.contains("similarity")) d.similarity = j["similarity"].get<double>();
    if (j.contains("judge_score")) d.judge_score = j["judge_score"].get<double>();
    if (j.contains("kg_entity")) d.kg_entity = j["kg_entity"].get<std::string>();
    if (j.contains("warning")) d.warning = j["warning"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad decision record: ") + e.what());
  }
  return d;
}

std::string_view to_string(SimilarityMode m) {
  switch (m) {
    case SimilarityMode::StaticOnly: return "static-only";
    case SimilarityMode::ContextualOnly: return "contextual-only";
    case SimilarityMode::StaticWithFallback: return "static-with-fallback";
  }
  return "static-with-fallback";
}

std::optional<SimilarityMode> parse_similarity_mode(std::string_view s) {
  for (auto m : {SimilarityMode::StaticOnly, SimilarityMode::ContextualOnly, SimilarityMode::StaticWithFallback})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

void FilterConfig::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "rho must lie in [0,1], got " + std::to_string(rho));
  if (kg_check_enabled && kg_endpoint.empty())
    throw Error(ErrorCode::InvalidConfig, "kg check enabled without an endpoint");
}

EmbeddingSimilarity::EmbeddingSimilarity(std::shared_ptr<const EmbeddingProvider> static_provider,
                                         std::shared_ptr<const EmbeddingProvider> contextual_provider,
                                         SimilarityMode mode)
    : static_(std::move(static_provider)), contextual_(std::move(contextual_provider)), mode_(mode) {
  if (mode_ != SimilarityMode::ContextualOnly && !static_)
    throw Error(ErrorCode::InvalidConfig, std::string(to_string(mode_)) + " needs static word vectors");
  if (mode_ == SimilarityMode::ContextualOnly && !contextual_)
    throw Error(ErrorCode::InvalidConfig, "contextual-only needs an embedding endpoint");
}

std::optional<double> EmbeddingSimilarity::score_with(const EmbeddingProvider* p, std::string_view a,
                                                      std::string_view b) const {
  if (p == nullptr) return std::nullopt;
  try {
    auto u = embed_term(*p, a);
    auto v = embed_term(*p, b);
    return cosine(u.vector, v.vector);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::OutOfVocabulary || e.code() == ErrorCode::ZeroVector) return std::nullopt;
    throw;
  }
}

std::optional<double> EmbeddingSimilarity::score(std::string_view candidate, std::string_view parent) const {
  switch (mode_) {
    case SimilarityMode::StaticOnly: return score_with(static_.get(), candidate, parent);
    case SimilarityMode::ContextualOnly: return score_with(contextual_.get(), candidate, parent);
    case SimilarityMode::StaticWithFallback:
      if (auto s = score_with(static_.get(), candidate, parent)) return s;
      return score_with(contextual_.get(), candidate, parent);
  }
  return std::nullopt;
}

bool depth_gate(std::size_t candidate_depth, std::size_t original_max_depth, const FilterConfig& cfg) {
  return candidate_depth <= original_max_depth + cfg.max_extra_depth;
}

bool passes_threshold(double similarity, double rho) { return similarity >= rho - kThresholdSlack; }

FilterDecision similarity_filter(std::string_view candidate, std::string_view parent,
                                 const Similarity& similarity, const FilterConfig& cfg) {
  FilterDecision d;
  d.candidate = std::string(candidate);
  auto s = similarity.score(candidate, parent);
  if (!s) {
    d.reason = Reason::Oov;
    return d;
  }
  d.similarity = *s;
  if (passes_threshold(*s, cfg.rho)) {
    d.outcome = Outcome::Accepted;
    d.reason = Reason::Passed;
  } else {
    d.reason = Reason::BelowThreshold;
  }
  return d;
}

FilterDecision similarity_filter(std::string_view candidate, std::string_view parent,
                                 const EmbeddingProvider& provider, const FilterConfig& cfg) {
  // Non-owning view over the caller's provider.
  std::shared_ptr<const EmbeddingProvider> view(&provider, [](const EmbeddingProvider*) {});
  const bool is_static = provider.kind() == EmbeddingKind::StaticWordVectors;
  EmbeddingSimilarity sim(is_static ? view : nullptr, is_static ? nullptr : view,
                          is_static ? SimilarityMode::StaticOnly : SimilarityMode::ContextualOnly);
  return similarity_filter(candidate, parent, sim, cfg);
}

double original_mean_similarity(const Taxonomy& t, const Similarity& similarity) {
  double sum = 0.0;
  std::size_t n = 0;
  auto visit = [&](auto& self, const TaxonomyNode& node) -> void {
    for (const auto& c : node.children) {
      if (auto s = similarity.score(c.name, node.name)) {
        sum += *s;
        ++n;
      }
      self(self, c);
    }
  };
  visit(visit, t.root());
  if (n == 0) throw Error(ErrorCode::NoMeasurableEdges, "no parent-child edge of the seed can be measured");
  return sum / static_cast<double>(n);
}

std::string build_judge_prompt(std::string_view candidate, std::string_view parent) {
  std::string p;
  p += "You are judging a proposed taxonomy edge.\n";
  p += "Parent class: \"" + std::string(parent) + "\"\n";
  p += "Proposed subclass: \"" + std::string(candidate) + "\"\n";
  p += "On a scale from 0 to 100, how plausible is it that the proposed subclass is a class "
       "(not an instance) and a direct subclass of the parent?\n";
  p += "Answer with a single integer and nothing else.\n";
  return p;
}

std::optional<double> parse_judge_score(std::string_view text) {
  static const std::regex number(R"((\d+(?:\.\d+)?))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, number)) return std::nullopt;
  double v = std::stod(m.str(1));
  if (v < 0.0 || v > 100.0) return std::nullopt;
  return v / 100.0;
}

double judge_relevance(LlmClient& client, const std::string& model_id, std::string_view candidate,
                       std::string_view parent) {
  auto raw = client.complete(model_id, build_judge_prompt(candidate, parent));
  auto score = parse_judge_score(raw);
  if (!score) throw Error(ErrorCode::UnparseableResponse, "judge gave no score: " + raw.substr(0, 200));
  return *score;
}

std::string_view to_string(KgVerdict v) {
  switch (v) {
    case KgVerdict::IsInstance: return "is_instance";
    case KgVerdict::IsClassLike: return "is_class_like";
    case KgVerdict::NotFound: return "not_found";
  }
  return "not_found";
}

std::string sparql_label_query(std::string_view label, bool case_insensitive) {
  std::string values;
  if (case_insensitive) {
    for (const auto& v : case_variants(label)) values += " \"" + sparql_escape(v) + "\"@en";
  } else {
    values = " \"" + sparql_escape(label) + "\"@en";
  }
  return "PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>\n"
         "PREFIX wikibase: <http://wikiba.se/ontology#>\n"
         "SELECT ?item ?links WHERE {\n"
         "  VALUES ?label {" + values + " }\n"
         "  ?item rdfs:label ?label .\n"
         "  OPTIONAL { ?item wikibase:sitelinks ?links . }\n"
         "}\nORDER BY DESC(?links) ?item\nLIMIT 1\n";
}

std::string sparql_instance_ask(std::string_view entity_iri) {
  return "PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n"
         "ASK { <" + std::string(entity_iri) + "> wdt:P31 ?o }\n";
}

SparqlKgClient::SparqlKgClient(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

nlohmann::json SparqlKgClient::query(const std::string& sparql) {
  http::Response res;
  try {
    res = http::get(endpoint_, {{"query", sparql}}, timeout_,
                    {{"Accept", "application/sparql-results+json"}, {"User-Agent", "taxoria/0.1"}});
  } catch (const Error& e) {
    throw Error(ErrorCode::KgUnreachable, e.what());
  }
  if (res.status != 200) throw Error(ErrorCode::KgUnreachable, "SPARQL endpoint returned HTTP " + std::to_string(res.status));
  auto j = nlohmann::json::parse(res.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::KgUnreachable, "SPARQL endpoint returned invalid JSON");
  return j;
}

std::optional<std::string> SparqlKgClient::resolve(std::string_view label, bool case_insensitive) {
  if (case_insensitive && case_variants(label).empty()) return std::nullopt;
  auto j = query(sparql_label_query(label, case_insensitive));
  try {
    const auto& bindings = j.at("results").at("bindings");
    if (bindings.empty()) return std::nullopt;
    return bindings.at(0).at("item").at("value").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::KgUnreachable, "unexpected SPARQL result shape");
  }
}

KgResult SparqlKgClient::check(std::string_view label) {
  auto entity = resolve(label, false);
  if (!entity) entity = resolve(label, true);
  if (!entity) return {KgVerdict::NotFound, std::nullopt};
  auto j = query(sparql_instance_ask(*entity));
  if (!j.contains("boolean") || !j["boolean"].is_boolean())
    throw Error(ErrorCode::KgUnreachable, "ASK result lacks a boolean");
  return {j["boolean"].get<bool>() ? KgVerdict::IsInstance : KgVerdict::IsClassLike, entity};
}

KgResult kg_instance_check(KgClient& client, std::string_view label) { return client.check(label); }

FilterDecision run_filter_chain(const CandidateContext& ctx, const FilterConfig& cfg,
                                const FilterProviders& providers) {
  FilterDecision d;
  d.candidate = std::string(ctx.candidate);
  d.parent_path = ctx.parent_path;

  if (ctx.parent.find_child(ctx.candidate) != nullptr) {
    d.reason = Reason::DuplicateSibling;
    return d;
  }
  if (!depth_gate(ctx.parent_path.size(), ctx.seed_max_depth, cfg)) {
    d.reason = Reason::DepthExceeded;
    return d;
  }

  if (providers.similarity == nullptr) throw Error(ErrorCode::InvalidConfig, "no similarity provider");
  auto sim = similarity_filter(ctx.candidate, ctx.parent.name, *providers.similarity, cfg);
  d.similarity = sim.similarity;
  if (!sim.accepted()) {
    d.reason = sim.reason;
    return d;
  }

  if (cfg.judge_enabled) {
    if (providers.judge == nullptr || !providers.judge_baseline)
      throw Error(ErrorCode::InvalidConfig, "judge enabled without a judge client and baseline");
    try {
      d.judge_score = judge_relevance(*providers.judge, providers.judge_model, ctx.candidate, ctx.parent.name);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableResponse && e.code() != ErrorCode::LlmUnreachable) throw;
      d.reason = Reason::Unparseable;
      d.warning = e.what();
      return d;
    }
    if (*d.judge_score < *providers.judge_baseline) {
      d.reason = Reason::JudgeBelowBaseline;
      return d;
    }
  }

  if (cfg.kg_check_enabled) {
    if (providers.kg == nullptr) throw Error(ErrorCode::InvalidConfig, "kg check enabled without a kg client");
    try {
      auto kg = kg_instance_check(*providers.kg, ctx.candidate);
      d.kg_entity = kg.entity;
      if (kg.verdict == KgVerdict::IsInstance) {
        d.reason = Reason::KgInstance;
        return d;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::KgUnreachable) throw;
      d.warning = std::string("kg unreachable, retained: ") + e.what();
    }
  }

  d.outcome = Outcome::Accepted;
  d.reason = Reason::Passed;
  return d;
}

}  // namespace taxoria
