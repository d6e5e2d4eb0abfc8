#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parisi/cascade.hpp"
#include "parisi/characteristics.hpp"
#include "parisi/parisi_pde.hpp"
#include "parisi/paths.hpp"
#include "parisi/rsb.hpp"
#include "parisi/spin_models.hpp"

namespace parisi {

using Json = nlohmann::ordered_json;

/// Schema violation at a JSON pointer.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string pointer, const std::string& what)
        : std::runtime_error(pointer + ": " + what), pointer_(std::move(pointer)) {}
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

/// Decimal with 17 significant digits; non-finite values become null in JSON.
std::string format_double(double x);
/// JSON text with every number written by format_double; indent < 0 gives one line.
std::string dump_json(const Json& j, int indent = 2);
void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const Json& j);
Json read_json_file(const std::string& path);

/// FNV-1a 64-bit hash as 16 hex digits (content fingerprint, not a cryptographic digest).
std::string content_hash(const std::string& bytes);

/// Little-endian float64 dump.
void write_f64(const std::string& path, const std::vector<double>& values);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
    std::string str() const;
};

// ---- values -> JSON --------------------------------------------------------

Json to_json(const Mat& m);  // row-major flat array
Json to_json(const Vec& v);
Json to_json(const StepPath& q);
Json to_json(const SpinMeasure& mu);
Json to_json(const XiModel& xi);
Json to_json(const LipschitzPath& L);
Json to_json(const Pdf& alpha);
Json to_json(const Decomposition& d);
Json to_json(const MatEstimate& e);
Json to_json(const ScalarEstimate& e);
Json to_json(const GibbsEstimate& e);
Json to_json(const GradPsiResult& g);
Json to_json(const RIdentityReport& r);
Json to_json(const CriticalPoint& cp);
Json to_json(const JumpTransfer& jt);
Json to_json(const RsbReport& r);
Json to_json(const MultiSpeciesModel& m);
Json to_json(const MsCriticalPoint& cp);
Json to_json(const MsReport& r);
/// Grid metadata of a solution (the field values go to binary dumps).
Json solution_meta(const ParisiSolution& sol);

CsvTable ensemble_csv(const CharacteristicEnsemble& ens);
CsvTable rsb_csv(const RsbReport& r);
CsvTable ms_csv(const MsReport& r);

// ---- JSON -> values (schema-checked, errors carry the pointer) -------------

Mat mat_from_json(const Json& j, int dim, const std::string& ptr);
Vec vec_from_json(const Json& j, int dim, const std::string& ptr);
StepPath step_path_from_json(const Json& j, const std::string& ptr = "");
/// Either {"dim", "atoms", "weights"} or a named family {"kind": "ising" | "ising_product" | "dirac", ...}.
SpinMeasure spin_measure_from_json(const Json& j, const std::string& ptr = "");
/// Either {"dim", "terms": [{"coef", "powers": {"(i,j)": k}}]} (1-based) or {"kind": "sk", "beta"}.
XiModel xi_from_json(const Json& j, const std::string& ptr = "");
MultiSpeciesModel multispecies_from_json(const Json& j, const std::string& ptr = "");
LipschitzPath lipschitz_from_json(const Json& j, const std::string& ptr = "");
GridSpec grid_spec_from_json(const Json& j, const std::string& ptr = "");
CharOptions char_options_from_json(const Json& j, const std::string& ptr = "");
GradPsiOptions grad_psi_options_from_json(const Json& j, const std::string& ptr = "");
CascadeOptions cascade_options_from_json(const Json& j, const std::string& ptr = "");

}  // namespace parisi
