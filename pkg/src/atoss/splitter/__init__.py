from .core import (
    DivergedLoss,
    EmptyCorpus,
    IdentitySplitter,
    SeqModel,
    SftConfig,
    TrainLog,
    generate_splits,
    greedy_accuracy,
    load_checkpoint,
    mean_nll,
    save_checkpoint,
    sft_loss,
    split,
    train_sft,
)
from .tiny import TinySeq2Seq
from .tokens import tokenize
