#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sste/data.hpp"

namespace sste {

/// Tilde is trained on the original training set, Hat on the auxiliary
/// subsets. Hat is the branch used for inference.
enum class Branch { Tilde, Hat };

std::string_view to_string(Branch b);

/// Branch-private parameters.
struct BranchHead {
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  double global_bias = 0.0;

  friend bool operator==(const BranchHead&, const BranchHead&) = default;
};

struct InitSpec {
  double scale = 0.01;
  std::uint64_t seed = 0;
};

/// Two-branch matrix factorization. Both branches read the same (shared)
/// factor tables and differ only in their bias heads.
class MfModel {
 public:
  MfModel() = default;
  MfModel(std::size_t n_users, std::size_t n_items, std::size_t k);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t k() const { return k_; }

  std::span<double> user_factors(UserId u) { return {user_factors_.data() + u * k_, k_}; }
  std::span<const double> user_factors(UserId u) const {
    return {user_factors_.data() + u * k_, k_};
  }
  std::span<double> item_factors(ItemId i) { return {item_factors_.data() + i * k_, k_}; }
  std::span<const double> item_factors(ItemId i) const {
    return {item_factors_.data() + i * k_, k_};
  }
  std::vector<double>& user_table() { return user_factors_; }
  std::vector<double>& item_table() { return item_factors_; }
  const std::vector<double>& user_table() const { return user_factors_; }
  const std::vector<double>& item_table() const { return item_factors_; }

  BranchHead& head(Branch b) { return b == Branch::Tilde ? tilde_ : hat_; }
  const BranchHead& head(Branch b) const { return b == Branch::Tilde ? tilde_ : hat_; }

  /// Total number of scalar parameters (shared factors plus both heads).
  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const MfModel&, const MfModel&) = default;

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::size_t k_ = 0;
  std::vector<double> user_factors_;
  std::vector<double> item_factors_;
  BranchHead tilde_;
  BranchHead hat_;
};

/// Factors ~ Uniform(-scale, scale) from the seed; all biases zero.
MfModel init(std::size_t n_users, std::size_t n_items, std::size_t k, const InitSpec& spec);

double logit(const MfModel& m, Branch b, UserId u, ItemId i);
/// Probability strictly inside (0,1).
double predict(const MfModel& m, Branch b, UserId u, ItemId i);
/// Scores every interaction of `d` with one branch.
std::vector<double> predict_all(const MfModel& m, Branch b, const Dataset& d);

/// Logit-stable binary cross-entropy, log(1 + e^z) - y z.
double bce_from_logit(double z, int label);
double instance_loss(const MfModel& m, Branch b, UserId u, ItemId i, int label, double weight);

/// Gradient of weight * BCE. Only the touched rows and the chosen head's
/// biases are nonzero.
struct SparseGradient {
  Branch branch = Branch::Hat;
  UserId user = 0;
  ItemId item = 0;
  std::vector<double> user_factor;
  std::vector<double> item_factor;
  double user_bias = 0.0;
  double item_bias = 0.0;
  double global_bias = 0.0;
};

SparseGradient gradients(const MfModel& m, Branch b, UserId u, ItemId i, int label,
                         double weight);

// Checkpoints are a line-oriented text format:
//
//   SSTE-MF-CHECKPOINT 1
//   dims <n_users> <n_items> <k>
//   user_factors            (n_users lines of k values)
//   item_factors            (n_items lines of k values)
//   head tilde              (user_bias line, item_bias line, global_bias line)
//   head hat
//   vocab <0|1>             (when 1: raw user id line, raw item id line)
//   end
//
// Values use the shortest round-trip decimal form, so save -> load is exact.

struct Checkpoint {
  MfModel model;
  std::optional<Vocabulary> vocab;
};

void write_checkpoint(std::ostream& out, const MfModel& m, const Vocabulary* vocab = nullptr);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const MfModel& m,
                     const Vocabulary* vocab = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sste
