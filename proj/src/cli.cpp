#include "liatm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "liatm/config.hpp"
#include "liatm/dfd.hpp"
#include "liatm/generation.hpp"
#include "liatm/metrics.hpp"
#include "liatm/otm.hpp"
#include "liatm/qa.hpp"
#include "liatm/rag.hpp"
#include "liatm/service.hpp"
#include "liatm/session.hpp"
#include "liatm/threat_kb.hpp"

namespace liatm::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  usage error\n"
    "  2  input parse or validation failure\n"
    "  3  QA gate failure (health score below --min-health)\n"
    "  4  remote backend failure\n";

constexpr const char* kDefaultPrompt = "Identify the threats of this system and propose mitigations.";

// Carries an exit code out of a subcommand.
struct Exit {
  int code;
};

std::string read_text(const std::string& path, const std::string& what, std::istream& in, std::ostream& err) {
  std::ostringstream buf;
  if (path == "-") {
    buf << in.rdbuf();
    return buf.str();
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    err << "error: cannot read " << what << " file '" << path << "'\n";
    throw Exit{kInputError};
  }
  buf << f.rdbuf();
  return buf.str();
}

dfd::Model load_dfd(const std::string& path, std::istream& in, std::ostream& err) {
  const std::string text = read_text(path, "DFD", in, err);
  const std::string where = path == "-" ? "<stdin>" : path;
  try {
    return dfd::parse(text);
  } catch (const dfd::SyntaxError& e) {
    err << where << ":" << e.line() << ":" << e.column() << ": error: " << e.detail() << "\n";
  } catch (const dfd::SemanticError& e) {
    err << where << ": error: " << e.what() << "\n";
  }
  throw Exit{kInputError};
}

otm::Document load_otm(const std::string& path, std::istream& in, std::ostream& err) {
  const std::string text = read_text(path, "threat model", in, err);
  try {
    return otm::parse(text);
  } catch (const otm::OtmValidationError& e) {
    for (const auto& d : e.diagnostics()) err << path << ": " << d.path << ": " << d.message << "\n";
  } catch (const otm::OtmParseError& e) {
    err << path << ": " << e.what() << "\n";
  }
  throw Exit{kInputError};
}

kb::ThreatCatalog load_catalog_flag(const std::string& path, std::istream& in, std::ostream& err) {
  if (path.empty()) return kb::builtin_catalog();
  const std::string text = read_text(path, "catalog", in, err);
  try {
    return kb::load_catalog(text);
  } catch (const std::exception& e) {
    err << path << ": error: " << e.what() << "\n";
    throw Exit{kInputError};
  }
}

Config load_config_flag(const std::string& path, std::ostream& err) {
  try {
    return load_config(path.empty() ? std::nullopt : std::optional<fs::path>(path));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    throw Exit{kInputError};
  }
}

void print_json(std::ostream& out, const ojson& j) { out << j.dump(2) << "\n"; }

std::vector<qa::MrInstance> all_instances(const dfd::Model& model, const otm::Document& doc,
                                          const kb::ThreatCatalog& catalog) {
  return qa::select_tests(model, qa::Selection::All, std::numeric_limits<std::size_t>::max(), &doc, catalog);
}

// -- generate ---------------------------------------------------------------

struct GenerateFlags {
  std::string dfd;
  std::string docs;
  std::string backend = "offline";
  std::string strategy = "direct";
  int k = 5;
  std::string prompt = kDefaultPrompt;
  std::string out;
  int min_health = 0;
  std::string format = "text";
  std::string catalog;
  std::string config;
  std::size_t token_budget = 0;
};

void load_docs(const std::string& dir, rag::VectorIndex& index, std::ostream& err) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    err << "error: cannot read documents directory '" << dir << "'\n";
    throw Exit{kInputError};
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const rag::HashingEmbedder embedder;
  for (const auto& p : files) {
    try {
      auto doc = rag::load_document_file(p, "doc-" + std::to_string(index.documents().size() + 1),
                                         rag::SourceKind::Other);
      index.add_document(doc, embedder);
    } catch (const rag::UnsupportedFormat& e) {
      err << "warning: skipping " << p.string() << ": unsupported format\n";
    } catch (const rag::RagError& e) {
      err << "error: " << e.what() << "\n";
      throw Exit{kInputError};
    }
  }
}

int cmd_generate(const GenerateFlags& f, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto strategy = gen::strategy_from_string(f.strategy);
  const auto backend = gen::backend_from_string(f.backend);
  if (!strategy || !backend || f.k < 0 || (f.format != "text" && f.format != "json")) {
    err << "error: invalid --strategy, --backend, --k or --format\n";
    return kUsage;
  }
  const auto catalog = load_catalog_flag(f.catalog, in, err);
  const dfd::Model model = load_dfd(f.dfd, in, err);
  const Config config = load_config_flag(f.config, err);

  rag::VectorIndex index;
  if (!f.docs.empty()) load_docs(f.docs, index, err);
  const auto retrieved = rag::retrieve(index, rag::HashingEmbedder(), f.prompt, static_cast<std::size_t>(f.k));

  gen::PromptBundle bundle;
  try {
    bundle = gen::build_prompt(model, f.prompt, *strategy, retrieved,
                               f.token_budget ? f.token_budget : config.token_budget, catalog);
  } catch (const gen::BudgetTooSmall& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  gen::GenerationResult result;
  if (*backend == gen::Backend::Offline) {
    result = gen::generate_offline(model, catalog);
  } else {
    gen::RemoteLlmConfig llm;
    llm.endpoint = config.llm_endpoint;
    llm.model = config.llm_model;
    llm.auth_token = config.llm_token;
    llm.timeout_seconds = config.llm_timeout_seconds;
    try {
      if (llm.endpoint.empty()) throw gen::RemoteLlmError("no LLM endpoint is configured");
      result = gen::generate_remote(bundle, llm);
    } catch (const gen::RemoteLlmError& e) {
      err << "error: " << e.what() << "\n";
      return kRemoteFailure;
    }
  }

  if (!result.document) {
    qa::Report report;
    report.diagnostics = result.parse_diagnostics;
    if (f.format == "json") {
      print_json(out, qa::to_json(report));
    } else {
      out << qa::render_summary(report);
    }
    err << "error: the model output is not a valid threat model; nothing written\n";
    return kQaGateFailed;
  }

  const auto report = qa::run_qa(*result.document, model, all_instances(model, *result.document, catalog), catalog);
  {
    std::ofstream o(f.out, std::ios::binary | std::ios::trunc);
    if (!o || !(o << otm::serialize(*result.document))) {
      err << "error: cannot write '" << f.out << "'\n";
      return kInputError;
    }
  }
  if (f.format == "json") {
    print_json(out, qa::to_json(report));
  } else {
    out << qa::render_summary(report);
    out << "wrote " << f.out << "\n";
  }
  return report.health_score < f.min_health ? kQaGateFailed : kSuccess;
}

// -- qa / metrics / validate --------------------------------------------------

int cmd_qa(const std::string& otm_path, const std::string& dfd_path, const std::string& format,
           const std::string& selection_name, std::size_t limit, int min_health, const std::string& catalog_path,
           std::istream& in, std::ostream& out, std::ostream& err) {
  const auto selection = qa::selection_from_string(selection_name);
  if (!selection) {
    err << "error: unknown --selection '" << selection_name << "'\n";
    return kUsage;
  }
  const auto catalog = load_catalog_flag(catalog_path, in, err);
  const auto model = load_dfd(dfd_path, in, err);
  const auto doc = load_otm(otm_path, in, err);
  const auto instances = qa::select_tests(model, *selection, limit, &doc, catalog);
  const auto report = qa::run_qa(doc, model, instances, catalog);
  if (format == "json") {
    print_json(out, qa::to_json(report));
  } else {
    out << qa::render_summary(report);
  }
  return report.health_score < min_health ? kQaGateFailed : kSuccess;
}

int cmd_metrics(const std::string& otm_path, const std::string& dfd_path, const std::string& reference_path,
                const std::string& format, const std::string& catalog_path, std::istream& in, std::ostream& out,
                std::ostream& err) {
  const auto catalog = load_catalog_flag(catalog_path, in, err);
  const auto model = load_dfd(dfd_path, in, err);
  const auto doc = load_otm(otm_path, in, err);
  std::optional<otm::Document> reference;
  if (!reference_path.empty()) reference = load_otm(reference_path, in, err);
  metrics::Report report;
  try {
    report = metrics::compute(doc, model, reference ? &*reference : nullptr, catalog);
  } catch (const metrics::ReferenceMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  if (format == "json") {
    print_json(out, metrics::to_json(report));
  } else {
    out << metrics::render_table(report);
  }
  return kSuccess;
}

int cmd_validate(const std::string& dfd_path, const std::string& format, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  const auto model = load_dfd(dfd_path, in, err);
  const auto warnings = dfd::validate(model);
  if (format == "json") {
    ojson j;
    j["valid"] = true;
    j["elements"] = model.elements().size();
    j["flows"] = model.flows().size();
    j["boundaries"] = model.boundaries().size();
    j["warnings"] = ojson::array();
    for (const auto& w : warnings)
      j["warnings"].push_back(
          {{"code", std::string(dfd::to_string(w.code))}, {"subject", w.subject}, {"message", w.message}});
    print_json(out, j);
  } else {
    out << "valid: \"" << model.system_name() << "\" with " << model.elements().size() << " elements, "
        << model.flows().size() << " flows, " << model.boundaries().size() << " boundaries\n";
    for (const auto& w : warnings) {
      out << "warning: " << dfd::to_string(w.code);
      if (!w.subject.empty()) out << " " << w.subject;
      out << ": " << w.message << "\n";
    }
  }
  return kSuccess;
}

int cmd_serve(const std::string& config_path, std::ostream& out, std::ostream& err) {
  const Config config = load_config_flag(config_path, err);
  session::StoreOptions opts;
  opts.data_root = config.data_root;
  opts.auto_regenerate = config.auto_regenerate;
  opts.token_budget = config.token_budget;
  opts.llm.endpoint = config.llm_endpoint;
  opts.llm.model = config.llm_model;
  opts.llm.auth_token = config.llm_token;
  opts.llm.timeout_seconds = config.llm_timeout_seconds;
  try {
    session::Store store(opts);
    service::HttpServer server(store);
    const int port = server.bind(config.bind_address, config.port);
    out << "listening on http://" << config.bind_address << ":" << port << "\n" << std::flush;
    server.listen();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kSuccess;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Threat modeling for LLM-integrated applications", "liatm"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  GenerateFlags g;
  auto* generate = app.add_subcommand("generate", "Generate a threat model from a DFD");
  generate->add_option("--dfd", g.dfd, "DFD file, or - for standard input")->required();
  generate->add_option("--docs", g.docs, "Directory of .txt/.md context documents");
  generate->add_option("--backend", g.backend, "offline or remote")->capture_default_str();
  generate->add_option("--strategy", g.strategy, "direct or chain-of-thought")->capture_default_str();
  generate->add_option("--k", g.k, "Retrieval depth")->capture_default_str();
  generate->add_option("--prompt", g.prompt, "Stakeholder prompt");
  generate->add_option("--out", g.out, "Output .otm.json path")->required();
  generate->add_option("--min-health", g.min_health, "Fail with exit 3 below this health score")
      ->capture_default_str();
  generate->add_option("--format", g.format, "text or json")->capture_default_str();
  generate->add_option("--catalog", g.catalog, "Catalog overlay JSON");
  generate->add_option("--config", g.config, "Configuration file");
  generate->add_option("--token-budget", g.token_budget, "Prompt token budget (overrides config)");

  std::string otm_path, dfd_path, format = "text", catalog, reference, selection = "all", config_path;
  std::size_t limit = std::numeric_limits<std::size_t>::max();
  int min_health = 0;

  auto* qa_cmd = app.add_subcommand("qa", "Check a threat model against its DFD");
  qa_cmd->add_option("--otm", otm_path, "Threat model JSON")->required();
  qa_cmd->add_option("--dfd", dfd_path, "DFD file, or - for standard input")->required();
  qa_cmd->add_option("--format", format, "text or json")->capture_default_str();
  qa_cmd->add_option("--selection", selection, "all or coverage-greedy")->capture_default_str();
  qa_cmd->add_option("--limit", limit, "Maximum metamorphic instances for coverage-greedy");
  qa_cmd->add_option("--min-health", min_health, "Fail with exit 3 below this health score")
      ->capture_default_str();
  qa_cmd->add_option("--catalog", catalog, "Catalog overlay JSON");

  auto* metrics_cmd = app.add_subcommand("metrics", "Compute evaluation metrics");
  metrics_cmd->add_option("--otm", otm_path, "Threat model JSON")->required();
  metrics_cmd->add_option("--dfd", dfd_path, "DFD file, or - for standard input")->required();
  metrics_cmd->add_option("--reference", reference, "Reference threat model for accuracy");
  metrics_cmd->add_option("--format", format, "text or json")->capture_default_str();
  metrics_cmd->add_option("--catalog", catalog, "Catalog overlay JSON");

  auto* validate = app.add_subcommand("validate", "Parse and lint a DFD");
  validate->add_option("--dfd", dfd_path, "DFD file, or - for standard input")->required();
  validate->add_option("--format", format, "text or json")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--config", config_path, "Configuration file");

  for (auto* sub : {generate, qa_cmd, metrics_cmd, validate, serve}) sub->footer(kExitCodeHelp);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kSuccess : kUsage;
  }
  if (format != "text" && format != "json") {
    err << "error: --format must be text or json\n";
    return kUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(g, in, out, err);
    if (qa_cmd->parsed())
      return cmd_qa(otm_path, dfd_path, format, selection, limit, min_health, catalog, in, out, err);
    if (metrics_cmd->parsed()) return cmd_metrics(otm_path, dfd_path, reference, format, catalog, in, out, err);
    if (validate->parsed()) return cmd_validate(dfd_path, format, in, out, err);
    if (serve->parsed()) return cmd_serve(config_path, out, err);
  } catch (const Exit& e) {
    return e.code;
  }
  return kUsage;
}

}  // namespace liatm::cli
