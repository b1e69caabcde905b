"""Learners used by the weakly supervised criteria."""
from .forest import RandomForest
from .logistic import ConstantClassifier, LogisticRegressionGD, log_loss_and_grad, predict_proba_one, sigmoid
from .persist import load_model, model_summary, save_model
from .text import (
    EmbeddingAverageClassifier,
    StackedClassifier,
    TfidfForestClassifier,
    TfidfLogisticClassifier,
    mean_embedding,
    out_of_fold_probabilities,
    positive_proba,
    stratified_fold_ids,
)
from .tfidf import TfidfVectorizer

__all__ = [
    "ConstantClassifier", "EmbeddingAverageClassifier", "LogisticRegressionGD", "RandomForest",
    "StackedClassifier", "TfidfForestClassifier", "TfidfLogisticClassifier", "TfidfVectorizer",
    "load_model", "log_loss_and_grad", "mean_embedding", "model_summary", "out_of_fold_probabilities",
    "positive_proba", "predict_proba_one", "save_model", "sigmoid", "stratified_fold_ids",
]
