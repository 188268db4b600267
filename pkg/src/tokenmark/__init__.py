"""tokenmark: 토큰 양자화 이미지를 위한 어휘 편향(lexical-bias) 워터마킹 툴킷."""

__version__ = "0.1.0"
