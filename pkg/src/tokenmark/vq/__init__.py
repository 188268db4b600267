"""벡터 양자화: 코드북, 양자화 파이프라인, 이미지 입출력, 합성 코퍼스."""
