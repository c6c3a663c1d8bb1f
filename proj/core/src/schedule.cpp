#include "voidseg/schedule.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace voidseg::segtrain {

TrainSchedule TrainSchedule::paper() { return {}; }

TrainSchedule TrainSchedule::desk() {
    TrainSchedule s;
    s.epochs = 20;
    s.steps_per_epoch = 50;
    s.batch_size = 16;
    s.crop_size = 64;
    return s;
}

TrainSchedule TrainSchedule::preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    throw std::invalid_argument("unknown schedule preset '" + name + "' (expected paper or desk)");
}

void TrainSchedule::validate() const {
    if (!(initial_lr > 0.0) || batch_size < 1 || epochs < 1 || steps_per_epoch < 1) {
        throw std::invalid_argument("schedule values must be positive");
    }
    if (!(plateau.factor > 0.0 && plateau.factor <= 1.0) || plateau.patience < 1 || plateau.min_lr < 0.0) {
        throw std::invalid_argument("plateau policy must be non-increasing");
    }
    if (crop_size < 0) throw std::invalid_argument("crop size must be non-negative");
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauPolicy policy)
    : lr_(initial_lr), policy_(policy) {}

double PlateauScheduler::step(double validation_loss) {
    if (validation_loss < best_) {
        best_ = validation_loss;
        bad_epochs_ = 0;
    } else if (++bad_epochs_ >= policy_.patience) {
        lr_ = std::max(policy_.min_lr, lr_ * policy_.factor);
        bad_epochs_ = 0;
    }
    return lr_;
}

std::string history_csv(const LossHistory& history) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "epoch,train_loss,validation_loss,validation_ap,lr\n";
    for (const auto& e : history) {
        os << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ',';
        if (!std::isnan(e.validation_ap)) os << e.validation_ap;
        os << ',' << e.lr << '\n';
    }
    return os.str();
}

}  // namespace voidseg::segtrain
