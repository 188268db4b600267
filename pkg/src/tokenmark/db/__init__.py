"""실험 결과 저장소 (SQLite)."""
