"""평가: 지표, 실험 실행, 코드북 축소 관찰, 결과 포맷팅."""
