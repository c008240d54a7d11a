from .attributes import (
    AnomalyEpisode,
    AttributeCorpus,
    AttrImage,
    anomaly_count,
    attribute_box,
    gen_attribute_corpus,
    make_anomaly_episode,
)
from .classification import (
    ClassificationCorpus,
    SynthClassSpec,
    bayes_accuracy,
    gen_classification,
    same_class_sets,
)
from .metrics import accuracy_by_set_size, anomaly_grid, auprc, frozen_episodes, mean_episode_auprc
from .store import load_corpus, write_corpus
