#include "mmb/eval/report.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

#include "mmb/eval/metrics.hpp"

namespace mmb::eval {

namespace {

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::optional<double> mean_ppl(const std::vector<DatasetScores>& rows, bool text_only_only) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (text_only_only && !r.text_only) continue;
    s += r.ppl;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

std::optional<double> EvalReport::text_only_avg_ppl() const { return mean_ppl(rows, true); }
std::optional<double> EvalReport::all_avg_ppl() const { return mean_ppl(rows, false); }

const DatasetScores* EvalReport::find(const std::string& dataset) const {
  for (const auto& r : rows)
    if (r.dataset == dataset) return &r;
  return nullptr;
}

std::string ablation_tsv(const std::vector<EvalReport>& reports) {
  std::vector<std::string> key_names, datasets;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : reports) {
    for (const auto& [k, _] : r.keys) add_unique(key_names, k);
    for (const auto& row : r.rows) add_unique(datasets, row.dataset);
  }
  std::ostringstream out;
  bool first = true;
  auto cell = [&](const std::string& s) {
    if (!first) out << '\t';
    out << s;
    first = false;
  };
  for (const auto& k : key_names) cell(k);
  for (const auto& d : datasets) cell(d);
  cell("Text avg");
  cell("IC first turn");
  cell("All avg");
  cell("status");
  out << '\n';
  for (const auto& r : reports) {
    first = true;
    for (const auto& k : key_names) {
      std::string v = "-";
      for (const auto& [rk, rv] : r.keys)
        if (rk == k) v = rv;
      cell(v);
    }
    for (const auto& d : datasets) {
      const auto* row = r.find(d);
      cell(row ? fmt(row->ppl, 2) : "-");
    }
    const auto t = r.text_only_avg_ppl(), a = r.all_avg_ppl();
    cell(t ? fmt(*t, 2) : "-");
    cell(r.ic_first_turn ? fmt(r.ic_first_turn->ppl, 2) : "-");
    cell(a ? fmt(*a, 2) : "-");
    cell(r.failure ? "FAILED: " + *r.failure : "ok");
    out << '\n';
  }
  return out.str();
}

std::string metrics_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "dataset\tppl\tf1\tbleu4\trouge_l\ttokens\texamples\tgenerated\n";
  auto row = [&](const DatasetScores& r) {
    out << r.dataset << '\t' << fmt(r.ppl, 4) << '\t' << fmt(r.f1, 4) << '\t' << fmt(r.bleu4, 4) << '\t'
        << fmt(r.rouge_l, 4) << '\t' << r.tokens << '\t' << r.examples << '\t' << r.generated << '\n';
  };
  for (const auto& r : report.rows) row(r);
  if (report.ic_first_turn) row(*report.ic_first_turn);
  return out.str();
}

DatasetScores evaluate_examples(const train::ChatModel& m, const std::string& name, bool text_only,
                                const std::vector<text::Example>& examples, const EvalOptions& opts) {
  DatasetScores s;
  s.dataset = name;
  s.text_only = text_only;
  s.examples = examples.size();
  const auto p = train::perplexity(m, examples, opts.limits);
  s.ppl = p.value();
  s.tokens = p.tokens;
  const std::size_t n = std::min(opts.max_generations, examples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = train::generate(m, examples[i], opts.beam, opts.limits);
    s.f1 += f1(g.text, examples[i].label);
    s.bleu4 += bleu4(g.text, examples[i].label);
    s.rouge_l += rouge_l(g.text, examples[i].label);
  }
  if (n > 0) {
    s.f1 /= static_cast<double>(n);
    s.bleu4 /= static_cast<double>(n);
    s.rouge_l /= static_cast<double>(n);
  }
  s.generated = n;
  return s;
}

EvalReport evaluate(const train::ChatModel& m,
                    const std::vector<std::pair<std::string, std::vector<text::Episode>>>& datasets,
                    train::ExampleBuilder& builder, const EvalOptions& opts) {
  EvalReport r;
  std::vector<text::Example> first_turn;
  for (const auto& [name, eps] : datasets) {
    if (eps.empty()) continue;
    bool text_only = true;
    for (const auto& ep : eps) text_only = text_only && text::role_is_text_only(ep.dataset_role);
    std::vector<text::Example> examples;
    for (const auto& ep : eps) {
      examples.push_back(builder.build(ep));
      if (ep.dataset_role == text::DatasetRole::ImageChat && ep.context_turns.empty())
        first_turn.push_back(examples.back());
    }
    r.rows.push_back(evaluate_examples(m, name, text_only, examples, opts));
  }
  if (!first_turn.empty()) r.ic_first_turn = evaluate_examples(m, "image_chat_first_turn", false, first_turn, opts);
  return r;
}

std::string AblationCell::value(const std::string& key) const {
  for (const auto& [k, v] : keys)
    if (k == key) return v;
  throw std::out_of_range("ablation cell has no key '" + key + "'");
}

std::vector<AblationCell> ablation_grid(const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  std::vector<AblationCell> cells{AblationCell{}};
  for (const auto& [key, values] : axes) {
    std::vector<AblationCell> next;
    for (const auto& c : cells)
      for (const auto& v : values) {
        auto d = c;
        d.keys.emplace_back(key, v);
        next.push_back(std::move(d));
      }
    cells = std::move(next);
  }
  return cells;
}

std::vector<EvalReport> run_ablation(const std::vector<AblationCell>& grid, const CellRunner& run,
                                     std::size_t threads) {
  std::vector<EvalReport> out(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        out[i] = run(grid[i]);
        out[i].keys = grid[i].keys;
      } catch (const std::exception& e) {
        out[i] = EvalReport{};
        out[i].keys = grid[i].keys;
        out[i].failure = e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, grid.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace mmb::eval
