#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace voidseg::segtrain {

/// Reduce-on-plateau: multiply the learning rate by `factor` after `patience`
/// epochs without validation improvement, never below `min_lr`.
struct PlateauPolicy {
    double factor = 0.5;
    int patience = 10;
    double min_lr = 1e-7;
};

struct TrainSchedule {
    double initial_lr = 0.0004;
    int batch_size = 128;
    int epochs = 200;
    int steps_per_epoch = 400;
    PlateauPolicy plateau;
    std::uint64_t seed = 0;
    /// Side of the random training crop; 0 trains on whole patches.
    int crop_size = 0;
    /// Random dihedral (flip / 90 degree rotation) augmentation per sample.
    bool augment = true;
    /// Upper bound on validation patches scored per epoch; 0 uses all.
    std::size_t validation_limit = 0;

    /// 200 epochs x 400 steps, batch 128.
    static TrainSchedule paper();
    /// 20 epochs x 50 steps, batch 16, 64 x 64 crops.
    static TrainSchedule desk();
    static TrainSchedule preset(const std::string& name);

    void validate() const;
};

class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, PlateauPolicy policy);

    /// Records one epoch's validation loss; returns the learning rate for the
    /// next epoch.
    double step(double validation_loss);
    [[nodiscard]] double lr() const { return lr_; }

private:
    double lr_;
    PlateauPolicy policy_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_epochs_ = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double validation_ap = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
};

using LossHistory = std::vector<EpochLog>;

/// CSV with header epoch,train_loss,validation_loss,validation_ap,lr.
std::string history_csv(const LossHistory& history);

}  // namespace voidseg::segtrain
