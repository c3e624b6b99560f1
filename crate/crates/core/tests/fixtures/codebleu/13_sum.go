package main

import "fmt"

func total(v []int) int {
	acc := 0
	for _, x := range v {
		acc += x
	}
	return acc
}

func main() {
	fmt.Println(total([]int{1, 2, 3}))
}
