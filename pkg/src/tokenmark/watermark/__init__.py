"""워터마크: 그린 리스트 풀, 로짓 소스, 삽입(hard/soft/post), 검출."""
