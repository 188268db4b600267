"""워터마크 제거 공격: 픽셀 공격, 토큰 뒤집기 채널, 외부 코드북 재양자화."""
