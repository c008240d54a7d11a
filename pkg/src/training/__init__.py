from .combinatorial import CtConfig, EpochPlan, ct_epoch_plan, fixed_set_plan, reshuffle
from .losses import anomaly_loss, cic_loss, sc_loss
from .optimizer import OptimState, adam_step, global_norm, lr_at
from .trainer import (
    TASKS,
    EarlyStop,
    EpochRecord,
    TrainConfig,
    Trainer,
    TrainResult,
    train,
    write_history_csv,
)
