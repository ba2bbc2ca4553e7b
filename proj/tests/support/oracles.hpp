#pragma once

// Test-only oracles and fakes. Nothing here calls into the code paths it checks.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <queue>
#include <random>
#include <set>
#include <stack>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "taxoria/filters.hpp"
#include "taxoria/generation.hpp"
#include "taxoria/taxonomy.hpp"

namespace taxoria::testing {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ---- structural oracles ----

inline void brute_count(const TaxonomyNode& n, std::size_t depth, std::size_t& count, std::size_t& max_depth) {
  ++count;
  if (depth > max_depth) max_depth = depth;
  for (const auto& c : n.children) brute_count(c, depth + 1, count, max_depth);
}

inline std::pair<std::size_t, std::size_t> brute_stats(const TaxonomyNode& root) {
  std::size_t count = 0, depth = 0;
  brute_count(root, 0, count, depth);
  return {count, depth};
}

using Visit = std::pair<const TaxonomyNode*, std::size_t>;

inline std::vector<Visit> queue_bfs(const TaxonomyNode& root) {
  std::vector<Visit> out;
  std::queue<Visit> q;
  q.push({&root, 0});
  while (!q.empty()) {
    auto v = q.front();
    q.pop();
    out.push_back(v);
    for (const auto& c : v.first->children) q.push({&c, v.second + 1});
  }
  return out;
}

inline std::vector<Visit> stack_dfs(const TaxonomyNode& root) {
  std::vector<Visit> out;
  std::stack<Visit> s;
  s.push({&root, 0});
  while (!s.empty()) {
    auto v = s.top();
    s.pop();
    out.push_back(v);
    const auto& ch = v.first->children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) s.push({&*it, v.second + 1});
  }
  return out;
}

/// Case-folded name paths of every node.
inline std::set<std::vector<std::string>> path_set(const TaxonomyNode& root) {
  std::set<std::vector<std::string>> out;
  std::vector<std::string> cur;
  std::function<void(const TaxonomyNode&)> walk = [&](const TaxonomyNode& n) {
    cur.push_back(lower(n.name));
    out.insert(cur);
    for (const auto& c : n.children) walk(c);
    cur.pop_back();
  };
  walk(root);
  return out;
}

inline bool has_duplicate_siblings(const TaxonomyNode& n) {
  std::set<std::string> seen;
  for (const auto& c : n.children)
    if (!seen.insert(lower(c.name)).second || has_duplicate_siblings(c)) return true;
  return false;
}

// ---- generators ----

/// Random tree with `nodes` nodes drawn from a small name pool so that two
/// trees built with different seeds share many paths.
inline TaxonomyNode random_tree(std::mt19937& rng, std::size_t nodes, std::size_t pool = 12,
                                const std::string& root_name = "Thing") {
  TaxonomyNode root(root_name);
  std::vector<std::vector<std::size_t>> index_paths{{}};
  auto node_at = [&](const std::vector<std::size_t>& ip) -> TaxonomyNode& {
    TaxonomyNode* cur = &root;
    for (auto i : ip) cur = &cur->children[i];
    return *cur;
  };
  std::size_t attempts = 0;
  while (index_paths.size() < nodes && attempts < nodes * 50) {
    ++attempts;
    auto parent_ip = index_paths[std::uniform_int_distribution<std::size_t>(0, index_paths.size() - 1)(rng)];
    auto& parent = node_at(parent_ip);
    std::string name = "N" + std::to_string(std::uniform_int_distribution<std::size_t>(0, pool - 1)(rng));
    if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) name = lower(name);
    bool clash = false;
    for (const auto& c : parent.children) clash = clash || lower(c.name) == lower(name);
    if (clash) continue;
    parent.children.emplace_back(name);
    parent_ip.push_back(parent.children.size() - 1);
    index_paths.push_back(parent_ip);
  }
  return root;
}

inline TaxonomyNode chain(std::size_t n) {
  TaxonomyNode root("C0");
  TaxonomyNode* cur = &root;
  for (std::size_t i = 1; i < n; ++i) {
    cur->children.emplace_back("C" + std::to_string(i));
    cur = &cur->children.back();
  }
  return root;
}

inline std::vector<double> random_vector(std::mt19937& rng, std::size_t dim) {
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = d(rng);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  return v;
}

// ---- fakes ----

/// Deterministic completion: the response is a pure function of the node
/// name extracted from the prompt.
class ScriptedLlm : public LlmClient {
 public:
  using Script = std::function<std::string(const std::string& node, const std::string& prompt)>;

  explicit ScriptedLlm(Script script, std::vector<std::string> models = {"llama3", "llama3.2", "mistral"})
      : script_(std::move(script)), models_(std::move(models)) {}

  std::string complete(const std::string&, const std::string& prompt) override {
    calls_.fetch_add(1);
    return script_(node_of(prompt), prompt);
  }
  std::vector<std::string> list_models() override { return models_; }
  std::size_t calls() const { return calls_.load(); }

  /// Recovers `{{node}}` from the default template ("... subclasses of \"X\".").
  static std::string node_of(const std::string& prompt) {
    const std::string marker = "subclasses of \"";
    auto p = prompt.find(marker);
    if (p == std::string::npos) return "";
    p += marker.size();
    auto e = prompt.find("\".", p);
    return prompt.substr(p, e - p);
  }

 private:
  Script script_;
  std::vector<std::string> models_;
  std::atomic<std::size_t> calls_{0};
};

inline std::string children_json(const std::vector<std::string>& names) {
  std::string out = "{\"children\": [";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + names[i] + "\"";
  }
  return out + "]}";
}

class ConstantSimilarity : public Similarity {
 public:
  explicit ConstantSimilarity(double v) : v_(v) {}
  std::optional<double> score(std::string_view, std::string_view) const override {
    calls_.fetch_add(1);
    return v_;
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  double v_;
  mutable std::atomic<std::size_t> calls_{0};
};

class FunctionSimilarity : public Similarity {
 public:
  using Fn = std::function<std::optional<double>(std::string_view, std::string_view)>;
  explicit FunctionSimilarity(Fn fn) : fn_(std::move(fn)) {}
  std::optional<double> score(std::string_view c, std::string_view p) const override { return fn_(c, p); }

 private:
  Fn fn_;
};

/// Wraps a client and sleeps before each completion.
class SlowLlm : public LlmClient {
 public:
  SlowLlm(std::shared_ptr<LlmClient> inner, std::chrono::milliseconds delay)
      : inner_(std::move(inner)), delay_(delay) {}
  std::string complete(const std::string& m, const std::string& p) override {
    std::this_thread::sleep_for(delay_);
    return inner_->complete(m, p);
  }
  std::vector<std::string> list_models() override { return inner_->list_models(); }

 private:
  std::shared_ptr<LlmClient> inner_;
  std::chrono::milliseconds delay_;
};

/// Records the order in which stages are consulted.
struct CallLog {
  std::mutex mu;
  std::vector<std::string> events;
  void add(std::string e) {
    std::lock_guard lock(mu);
    events.push_back(std::move(e));
  }
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("taxoria-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace taxoria::testing
