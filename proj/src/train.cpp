#include "rppg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "rppg/errors.hpp"
#include "rppg/nd/tape.hpp"
#include "rppg/rng.hpp"

namespace rppg::train {

using nd::Tensor;

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0))
        throw ConfigError("learning rate must be >= 0, got " + std::to_string(lr0));
    if (lr_halve_every == 0) throw ConfigError("lr halving period must be >= 1");
    if (max_epochs == 0) throw ConfigError("need at least one epoch");
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("momentum must lie in [0, 1)");
    model.validate();
    clip.validate();
}

double lr_schedule(const TrainConfig& config, std::size_t epoch) {
    const auto halvings = epoch / config.lr_halve_every;
    return config.lr0 * std::pow(0.5, static_cast<double>(halvings));
}

namespace {

std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct GradAccum {
    std::map<std::string, std::vector<double>> sums;
    std::size_t count = 0;

    void add(nd::Tape& tape, const model::ModelParams& tracked) {
        tracked.for_each([&](const std::string& name, const Tensor& t) {
            std::vector<double> g = tape.grad_of(t);
            auto it = sums.find(name);
            if (it == sums.end()) {
                sums.emplace(name, std::move(g));
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
            }
        });
        ++count;
    }
};

} // namespace

double group_accuracy(const model::ModelParams& params,
                      const std::vector<stmap::MapGroup>& groups) {
    if (groups.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& g : groups) {
        auto filtered = model::stfnet_forward(g, params);
        auto logits = model::stinet_forward(filtered, params);
        auto probs = model::group_probability(logits);
        if (argmax_lowest(probs) == g.label_t1) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(groups.size());
}

TrainResult train(const TrainConfig& config,
                  const std::vector<stmap::MapGroup>& train_groups,
                  const std::vector<stmap::MapGroup>& val_groups) {
    config.validate();
    if (train_groups.empty()) throw ConfigError("no training groups");

    std::set<std::size_t> classes;
    for (const auto& g : train_groups) {
        if (g.label_t1 >= config.model.num_classes)
            throw ConfigError("group label " + std::to_string(g.label_t1) +
                              " outside the model's " +
                              std::to_string(config.model.num_classes) + " classes");
        classes.insert(g.label_t1);
    }
    if (classes.size() < 2)
        throw ConfigError("training data holds a single class; need at least 2");

    model::ModelParams params =
        model::ModelParams::init(config.model, derive_seed(config.seed, "init"));

    Rng order_rng(derive_seed(config.seed, "order"));
    Rng blend_rng(derive_seed(config.seed, "blend"));

    std::map<std::string, std::vector<double>> velocity;

    TrainResult result;
    result.best_params = params;
    double best_acc = -1.0;
    std::size_t perfect_streak = 0;

    std::vector<std::size_t> order(train_groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = lr_schedule(config, epoch);

        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.integer(i)]);

        double ce_sum = 0.0, rho_sum = 0.0;
        std::size_t seen = 0, step = 0;

        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(cursor + config.batch_size, order.size());
            GradAccum accum;

            for (std::size_t p = cursor; p < batch_end; ++p) {
                const std::size_t anchor = order[p];
                augment::PairSample pair =
                    augment::sample_pair(train_groups, anchor, config.blend, blend_rng);
                augment::BlendedSample sample = augment::blend(
                    train_groups[anchor], train_groups[pair.partner], pair.alpha);

                try {
                    nd::Tape tape;
                    model::ModelParams tracked = params.tracked();
                    auto filtered = model::stfnet_forward(sample.group, tracked);
                    auto logits = model::stinet_forward(filtered, tracked);
                    Tensor adj = model::adjacency_loss(filtered, config.clip);
                    Tensor loss = model::total_loss(logits, sample.t1, sample.t2,
                                                    sample.alpha, adj, config.beta);
                    tape.backward(loss);
                    accum.add(tape, tracked);

                    const double rho = adj.value();
                    ce_sum += loss.value() - config.beta * rho;
                    rho_sum += rho;
                    ++seen;
                } catch (const ContractError& e) {
                    throw ContractError("training aborted at epoch " +
                                        std::to_string(epoch) + ", step " +
                                        std::to_string(step) + ": " + e.what());
                }
            }

            const double inv = 1.0 / static_cast<double>(accum.count);
            params.for_each([&](const std::string& name, Tensor& t) {
                std::vector<double>& g = accum.sums.at(name);
                for (double& v : g) {
                    v *= inv;
                    if (!std::isfinite(v))
                        throw ContractError("training aborted at epoch " +
                                            std::to_string(epoch) + ", step " +
                                            std::to_string(step) +
                                            ": non-finite gradient in " + name);
                }
                const std::vector<double>& old = t.values();
                std::vector<double> next(old.size());
                if (config.momentum > 0.0) {
                    auto [it, fresh] = velocity.try_emplace(
                        name, std::vector<double>(old.size(), 0.0));
                    std::vector<double>& vel = it->second;
                    for (std::size_t i = 0; i < old.size(); ++i) {
                        vel[i] = config.momentum * vel[i] + g[i];
                        next[i] = old[i] - lr * vel[i];
                    }
                } else {
                    for (std::size_t i = 0; i < old.size(); ++i)
                        next[i] = old[i] - lr * g[i];
                }
                t = Tensor::from(t.shape(), std::move(next));
            });

            cursor = batch_end;
            ++step;
        }

        const double val_acc = group_accuracy(params, val_groups);
        result.history.push_back({epoch, lr, ce_sum / static_cast<double>(seen),
                                  rho_sum / static_cast<double>(seen), val_acc});

        if (val_acc > best_acc) {
            best_acc = val_acc;
            result.best_params = params;
            result.best_epoch = epoch;
        }

        perfect_streak = (val_acc == 1.0) ? perfect_streak + 1 : 0;
        if (config.early_stop && perfect_streak >= 5) break;
    }

    result.final_params = params;
    return result;
}

void write_history(const std::filesystem::path& path,
                   const std::vector<EpochStats>& history) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : history)
        arr.push_back({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"loss_ce", e.loss_ce},
                       {"loss_rho", e.loss_rho},
                       {"val_acc", e.val_acc}});
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << arr.dump(2) << '\n';
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

} // namespace rppg::train
